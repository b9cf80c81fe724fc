"""Sign identifiability of causal effects in Ornstein-Uhlenbeck (Lyapunov) models."""
