"""Monte Carlo solutions of 1-D semilinear heat equations by branching particle systems."""
