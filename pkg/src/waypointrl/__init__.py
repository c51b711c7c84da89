"""Goal-conditioned RL with a training-time waypoint curriculum.

Subpackages: env (2D mazes), approx (dense nets + Adam), buffer (relabeling
replay), clearning (classifier critics + actor), planner (waypoint
curriculum), search (test-time graph search baseline), oracle (exact tabular
ground truth), trainer (experiment loop), cli (command line).
"""

__version__ = "0.1.0"
