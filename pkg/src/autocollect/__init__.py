"""Autonomous tabletop data collection engine.

Closed loop: scene-relevant task planning, in-context denoised action
generation, VQA success evaluation, and FSM-orchestrated environment reset
with asymmetric storage routing -- runnable against a deterministic kinematic
simulator with oracle backends, or external backends over a wire adapter.
"""

__version__ = "0.1.0"
