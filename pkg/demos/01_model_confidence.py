"""How well does the transition model know the entity?

Fit the per-coordinate GP on a few episodes of the canonical game and look
at the confidence band on the entity coordinate, both near the data and
away from it.
"""

import numpy as np

from hmarl import canonical_env, default_policy_set, gp_fit, gp_predict, rollout_true
from hmarl.gp_model import KernelSpec, TransitionDataset
from hmarl.game_env import transition_mean

spec = canonical_env()
ps = default_policy_set(spec)
rng = np.random.default_rng(0)

# ten episodes of random profiles, 100 transitions
data = TransitionDataset.empty(spec.input_dim, spec.state_dim)
for _ in range(10):
    prof = tuple(rng.integers(0, 4, size=2))
    data = data.append(*rollout_true(spec, ps, prof, rng).transitions())
post = gp_fit(data, KernelSpec.isotropic("se", spec.input_dim, 0.5, 0.05), 1e-4)
print(f"trained on {post.n_points} transitions")

# sweep the entity position with the agents frozen at their start
s = np.tile(spec.initial_state, (9, 1))
s[:, 2] = np.linspace(-1.5, 1.5, 9)
a = np.zeros((9, 2))
mean, std = gp_predict(post, s, a)
truth = transition_mean(spec, s, a)

print(" z      true z'   model z'   2*sigma   inside")
for z, t, m, sd in zip(s[:, 2], truth[:, 2], mean[:, 2], std[:, 2]):
    print(f"{z:+.2f}   {t:+.4f}   {m:+.4f}    {2 * sd:.4f}    {abs(t - m) <= 2 * sd}")
# far from the data the band widens back toward the prior std (sqrt(0.05) ~ 0.22)
