"""Hedge self-play on two textbook games.

Matching pennies has a unique mixed equilibrium.  Chicken shows why the
exploitability of a correlated distribution may drop below zero.
"""

import numpy as np

from hmarl import HedgeConfig, MixedProfile, PayoffTensor, exploitability, hedge_selfplay

pennies = PayoffTensor(np.array([[[1.0, -1.0], [-1.0, 1.0]], [[-1.0, 1.0], [1.0, -1.0]]]))
mixed = hedge_selfplay(pennies, HedgeConfig(iterations=5000))
print("pennies  marginals:", mixed.marginal(0).round(3), mixed.marginal(1).round(3))
print("pennies  exploitability:", exploitability(pennies, mixed)[1])

u = np.array([[0.0, 7.0], [2.0, 6.0]])
chicken = PayoffTensor(np.stack([u, u.T]))
mixed = hedge_selfplay(chicken, HedgeConfig(iterations=5000))
print("chicken  Hedge output:\n", mixed.probs.round(3))
print("chicken  exploitability:", exploitability(chicken, mixed)[0].round(4))

# a traffic light: never (swerve, swerve) or (straight, straight)
light = MixedProfile(np.array([[0.0, 0.5], [0.5, 0.0]]))
print("chicken  traffic-light exploitability:", exploitability(chicken, light)[0])
