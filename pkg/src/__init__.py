"""Monte Carlo checks for fBm in Brownian time."""
