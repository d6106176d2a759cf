"""Safe highway-driving RL: double DQN shaped by a gap-rule safety check and a
mixture-density RNN that predicts multimodal futures and penalizes actions whose
predicted states would violate safety."""

__version__ = "0.1.0"
