"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in pytest's terminal summary (see ``conftest.py``) and
when the module is run directly with ``python tests/test_acceptance.py``.
"""

import csv
import io
import time

import numpy as np
import pytest

from hmarl import cli
from hmarl import game_env as ge
from hmarl.cce_solver import HedgeConfig, MixedProfile, PayoffTensor, exploitability, hedge_selfplay
from hmarl.driver import ExperimentConfig, run_experiment
from hmarl.gp_model import BetaSchedule, KernelSpec, TransitionDataset, gp_fit, gp_predict
from hmarl.hallucination import HallucinationConfig, StreamFamily, lcb_estimate, mean_estimate, ucb_estimate

RESULTS: dict[int, str] = {}
SEEDS = tuple(range(10))


def report(number: int, ok: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return ok


def canonical_config(rounds=50) -> ExperimentConfig:
    spec = ge.canonical_env()
    return ExperimentConfig(env=spec, policy_set=ge.default_policy_set(spec), rounds=rounds)


@pytest.fixture(scope="session")
def hmarl_runs():
    """The full 50-round, 10-seed H-MARL experiment, timed once and shared."""
    cfg = canonical_config()
    start = time.perf_counter()
    runs = [run_experiment(cfg, s, "hmarl") for s in SEEDS]
    return runs, time.perf_counter() - start


@pytest.fixture(scope="session")
def reference_runs():
    predmean = [run_experiment(canonical_config(rounds=40), s, "predmean") for s in SEEDS]
    # the oracle plans on the fixed true tensor, so its value is the same every round
    oracle = [run_experiment(canonical_config(rounds=1), s, "oracle") for s in SEEDS]
    return predmean, oracle


# -- oracles ----------------------------------------------------------------


def dense_posterior(kind, ls, sv, noise, x, y, xq):
    diff = lambda a, b: np.sum(((a[:, None, :] - b[None, :, :]) / ls) ** 2, axis=-1)  # noqa: E731

    def k(a, b):
        r2 = diff(a, b)
        if kind == "se":
            return sv * np.exp(-0.5 * r2)
        r = np.sqrt(5.0 * r2)
        return sv * (1.0 + r + r**2 / 3.0) * np.exp(-r)

    gram = k(x, x) + noise * np.eye(len(x))
    ks = k(xq, x)
    mean = ks @ np.linalg.solve(gram, y)
    var = sv - np.sum(ks * np.linalg.solve(gram, ks.T).T, axis=1)
    return mean, np.sqrt(np.maximum(var, 0.0))


def brute_force_eps(values, probs):
    shape = values.shape[1:]
    eps = []
    for i in range(values.shape[0]):
        base = float(np.sum(probs * values[i]))
        best = -np.inf
        for dev in range(shape[i]):
            v = 0.0
            for idx in np.ndindex(*shape):
                q = list(idx)
                q[i] = dev
                v += probs[idx] * values[(i, *q)]
            best = max(best, v)
        eps.append(best - base)
    return max(eps)


def collect_rows(spec, ps, rng, rows):
    data = TransitionDataset.empty(spec.input_dim, spec.state_dim)
    while len(data) < rows:
        prof = tuple(int(j) for j in rng.integers(0, 4, size=spec.n_agents))
        x, y = ge.rollout_true(spec, ps, prof, rng).transitions()
        data = data.append(x, y)
    return TransitionDataset(data.inputs[:rows], data.targets[:rows])


def first_within(values, ref, cap, tol=0.1):
    hit = np.flatnonzero(np.abs(np.asarray(values[:cap]) - ref) <= tol * abs(ref))
    return int(hit[0]) + 1 if hit.size else cap + 1


# -- criteria ---------------------------------------------------------------


def test_01_gp_oracle_equivalence():
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n, d, p = int(rng.integers(1, 201)), int(rng.integers(1, 10)), int(rng.integers(1, 4))
        kind = str(rng.choice(["se", "matern52"]))
        ls = rng.uniform(0.3, 2.0, d)
        sv = float(rng.uniform(0.05, 2.0))
        noise = float(10 ** rng.uniform(-3, -1))
        x = rng.uniform(-1, 1, (n, d))
        y = np.sin(x @ rng.normal(size=(d, p))) + 0.01 * rng.normal(size=(n, p))
        post = gp_fit(TransitionDataset(x, y), KernelSpec(kind, tuple(ls), sv), noise)
        xq = rng.uniform(-1.2, 1.2, (50, d))
        mean, std = post.predict_delta(xq)
        for c in range(p):
            m_ref, s_ref = dense_posterior(kind, ls, sv, noise, x, y[:, c], xq)
            for got, ref in ((mean[:, c], m_ref), (std[:, c], s_ref)):
                rel = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-12 * np.sqrt(sv))
                worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    assert report(1, ok, f"max relative deviation {worst:.2e} (tol 1e-8), {elapsed:.1f}s (limit 10s)")


def test_02_calibration_coverage():
    spec = ge.canonical_env()
    ps = ge.default_policy_set(spec)
    kernel = KernelSpec.isotropic("se", spec.input_dim, 0.5, 0.05)
    start = time.perf_counter()
    coverage = []
    for seed in SEEDS:
        rng = np.random.default_rng(1000 + seed)
        post = gp_fit(collect_rows(spec, ps, rng, 200), kernel, 1e-4)
        held = collect_rows(spec, ps, rng, 1000)
        s, a = held.inputs[:, : spec.state_dim], held.inputs[:, spec.state_dim :]
        mean, std = gp_predict(post, s, a)
        f = ge.transition_mean(spec, s, a)
        inside = np.all(np.abs(f - mean) <= 2.0 * std, axis=1)
        coverage.append(inside.mean())
    med = float(np.median(coverage))
    elapsed = time.perf_counter() - start
    ok = med >= 0.95 and elapsed < 60
    assert report(2, ok, f"median coverage {med:.3f} (need >= 0.95), {elapsed:.1f}s (limit 60s)")


def test_03_confidence_property():
    spec = ge.grid_env()
    ps = ge.default_policy_set(spec)
    kernel = KernelSpec.isotropic("se", spec.input_dim, 0.5, 0.05)
    cfg = HallucinationConfig(z=9, eta_mode="spaced", episodes=1, beta=BetaSchedule("constant", 2.0))
    truth = ge.true_payoff_tensor(spec, ps, deterministic=True).values
    start = time.perf_counter()
    upper, lower, cells = 0, 0, 0
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        post = gp_fit(collect_rows(spec, ps, rng, 200), kernel, 1e-4)
        streams = StreamFamily(seed)
        for prof in ps.profiles():
            for agent in range(spec.n_agents):
                v = truth[(agent, *prof)]
                upper += ucb_estimate(post, spec, ps, prof, agent, cfg, streams).mean >= v
                lower += lcb_estimate(post, spec, ps, prof, agent, cfg, streams).mean <= v
                cells += 1
    elapsed = time.perf_counter() - start
    fu, fl = upper / cells, lower / cells
    ok = fu >= 0.95 and fl >= 0.95 and elapsed < 180
    assert report(3, ok, f"UCB>=V in {fu:.3f}, LCB<=V in {fl:.3f} of {cells} cells (need >= 0.95), {elapsed:.1f}s")


def test_04_beta_zero_collapse():
    rng = np.random.default_rng(4)
    mismatches = 0
    for case in range(50):
        spec = ge.canonical_env() if case % 2 else ge.grid_env()
        ps = ge.default_policy_set(spec)
        post = gp_fit(
            collect_rows(spec, ps, rng, int(rng.integers(10, 60))),
            KernelSpec.isotropic(str(rng.choice(["se", "matern52"])), spec.input_dim, 0.5, 0.05),
            1e-4,
        )
        cfg = HallucinationConfig(
            z=int(rng.integers(1, 10)),
            eta_mode=str(rng.choice(["spaced", "random"])),
            episodes=int(rng.integers(1, 6)),
            noise_std=(0.0, 0.0, float(rng.uniform(0, 0.05))),
        )
        prof = tuple(int(j) for j in rng.integers(0, 4, size=2))
        agent = int(rng.integers(0, 2))
        streams = StreamFamily(int(rng.integers(0, 2**32)), int(rng.integers(0, 50)))
        u = ucb_estimate(post, spec, ps, prof, agent, cfg, streams, beta=0.0)
        lo = lcb_estimate(post, spec, ps, prof, agent, cfg, streams, beta=0.0)
        m = mean_estimate(post, spec, ps, prof, agent, cfg, streams)
        mismatches += not (u.mean == lo.mean == m.mean and u.std_error == lo.std_error == m.std_error)
    assert report(4, mismatches == 0, f"{mismatches} of 50 cases differ (need 0, bit-exact)")


def test_05_cce_solver():
    start = time.perf_counter()
    pennies = np.array([[[1.0, -1.0], [-1.0, 1.0]], [[-1.0, 1.0], [1.0, -1.0]]])
    _, eps_pennies = exploitability(PayoffTensor(pennies), MixedProfile.product([np.full(2, 0.5)] * 2))
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        values = rng.uniform(-1, 1, size=(2, 4, 4))
        mixed = hedge_selfplay(PayoffTensor(values), HedgeConfig(iterations=10_000))
        worst = max(worst, brute_force_eps(values, mixed.probs) / (values.max() - values.min()))
    elapsed = time.perf_counter() - start
    ok = eps_pennies == 0.0 and worst <= 0.05 and elapsed < 30
    assert report(
        5, ok, f"pennies eps={eps_pennies!r}; worst Hedge eps/range {worst:.4f} (tol 0.05), {elapsed:.1f}s (limit 30s)"
    )


def test_06_sublinear_regret(hmarl_runs):
    runs, _ = hmarl_runs
    agent_ok, parts = [], []
    for i in range(2):
        avg10 = np.array([r.regret_curves[9, i] / 10 for r in runs])
        avg50 = np.array([r.regret_curves[49, i] / 50 for r in runs])
        margin = float(np.median(avg50 - 0.5 * avg10))
        agent_ok.append(margin <= 0)
        parts.append(f"agent {i}: median R(50)/50 - 0.5 R(10)/10 = {margin:.4f}")
    assert report(6, all(agent_ok), "; ".join(parts) + " (need <= 0)")


def test_07_hmarl_beats_predmean(hmarl_runs, reference_runs):
    runs, _ = hmarl_runs
    predmean, oracle = reference_runs
    wins, pairs = 0, []
    for h, p, o in zip(runs, predmean, oracle):
        ref = float(o.avg_true_value[0])
        th, tp = first_within(h.avg_true_value, ref, 40), first_within(p.avg_true_value, ref, 40)
        wins += th < tp
        pairs.append(f"{th}/{tp}")
    detail = f"H-MARL strictly faster in {wins}/10 seeds (need >= 7); rounds H/P: {' '.join(pairs)}"
    assert report(7, wins >= 7, detail)


def test_08_tstar_machinery(hmarl_runs):
    runs, _ = hmarl_runs
    rescans_ok, improved = True, 0
    for r in runs:
        rows = list(csv.DictReader(io.StringIO(cli.rounds_csv(r))))
        gaps = [float(row["gap_t"]) for row in rows]
        rescans_ok &= r.t_star == int(np.argmin(gaps)) + 1
        improved += gaps[r.t_star - 1] <= gaps[0]
    ok = rescans_ok and improved >= 9
    assert report(8, ok, f"re-scan agrees on all runs: {rescans_ok}; gap(t*) <= gap(1) in {improved}/10 (need >= 9)")


def test_09_information_curve(hmarl_runs):
    runs, _ = hmarl_runs
    first = np.median([np.mean([log.sigma_sq_increment for log in r.logs[:10]]) for r in runs])
    last = np.median([np.mean([log.sigma_sq_increment for log in r.logs[40:50]]) for r in runs])
    assert report(9, last < first, f"median mean increment rounds 41-50 {last:.4g} vs rounds 1-10 {first:.4g}")


def test_10_determinism(tmp_path):
    cfg_text = "env: {name: nonlinear-nav-2}\nplanner: hmarl\nrounds: 10\nseed: 42\n"
    path = tmp_path / "cfg.yaml"
    path.write_text(cfg_text)
    codes = [cli.main(["--config", str(path), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    files = ("rounds_42.csv", "summary_42.json")
    same = all((tmp_path / "a" / "hmarl" / f).read_bytes() == (tmp_path / "b" / "hmarl" / f).read_bytes() for f in files)
    ok = codes == [0, 0] and same
    assert report(10, ok, f"exit codes {codes}; CSV and summary byte-identical: {same}")


def test_11_runtime(hmarl_runs):
    _, elapsed = hmarl_runs
    assert report(11, elapsed <= 600, f"50 rounds x 10 seeds in {elapsed:.1f}s on this machine (limit 600s)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
