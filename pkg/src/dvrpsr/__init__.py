"""Dynamic vehicle routing with stochastic requests: knapsack-based potential
estimates, online scheduling policies, initial route planning and an
event-driven simulator."""

__version__ = "0.1.0"
