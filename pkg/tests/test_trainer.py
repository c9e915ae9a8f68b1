import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_graph
from gdplace.errors import CheckpointError, ParameterError, TrainingError
from gdplace.model import GdpModel, ModelConfig
from gdplace.numerics import Adam, Tensor
from gdplace.simulator import SimReport, simulate, uniform_topology
from gdplace.trainer import (
    INVALID_REWARD,
    RewardState,
    TrainConfig,
    Trajectory,
    Workload,
    ablate,
    advantage,
    clipped_surrogate,
    finetune,
    ppo_update,
    replay_advantages,
    reward_fn,
    train,
    zeroshot,
)

SMALL = ModelConfig(hidden=16, gnn_iterations=2, attn_layers=1, heads=2, segment=8, max_devices=4)
QUICK = TrainConfig(updates=3, episodes_per_update=4, minibatch=4, ppo_epochs=2)


def report(makespan, valid=True):
    return SimReport(valid, None if valid else "oom", makespan, (makespan,), (0,), 0)


def small_model(seed=0, **kw):
    return GdpModel.create(ModelConfig(**{**SMALL.__dict__, "init_seed": seed, **kw}))


def chain_workload(n=10, out_bytes=10, name="chain"):
    g = make_graph(n, [(i, i + 1) for i in range(n - 1)], out_bytes=[out_bytes] * n, name=name)
    return Workload(name, g, uniform_topology(2, bandwidth=1.0))


def fork_workload(name="fork"):
    g = make_graph(6, [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)],
                   costs=[1, 4, 4, 4, 4, 1], out_bytes=[1] * 6, name=name)
    return Workload(name, g, uniform_topology(2, bandwidth=4.0))


# -- reward and advantage -------------------------------------------------------------

def test_reward_examples():
    assert reward_fn(report(1.0)) == -1.0
    assert reward_fn(report(0.5, valid=False)) == INVALID_REWARD == -10.0
    assert reward_fn(report(0.234)) == pytest.approx(-0.48373546489791297, abs=1e-15)


@given(st.floats(0.0, 1e6), st.floats(0.0, 1e6))
def test_reward_strictly_decreasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert reward_fn(report(lo)) > reward_fn(report(hi))
    assert reward_fn(report(lo, valid=False)) == reward_fn(report(hi, valid=False)) == -10.0


def test_advantage_examples():
    state = RewardState()
    assert advantage(-1.0, state, "g") == 0.0
    advantage(-2.0, state, "g")
    assert advantage(-1.0, state, "g") == 0.5
    assert state.count("g") == 3
    # Baselines are per graph.
    assert advantage(-7.0, state, "h") == 0.0
    assert replay_advantages([("g", -3.0)] * 5) == [0.0] * 5


@given(st.lists(st.tuples(st.sampled_from("ab"), st.floats(-10, 0)), max_size=30))
def test_advantage_stream_reproducible(log):
    state = RewardState()
    live = [advantage(r, state, g) for g, r in log]
    assert replay_advantages(log) == live
    for g in "ab":
        hist = [r for gg, r in log if gg == g]
        assert state.history.get(g, []) == hist
        if hist:
            assert state.mean(g) == pytest.approx(sum(hist) / len(hist))


# -- clipped surrogate ----------------------------------------------------------------

def test_surrogate_unclipped_at_ratio_one():
    adv = np.array([0.5, -1.5, 2.0])
    lp = np.array([-1.0, -2.0, -3.0])
    out = clipped_surrogate(Tensor(lp), lp, adv, 0.2).data
    assert np.array_equal(out, adv)


def test_surrogate_clips_large_ratio():
    eps = 0.2
    old = np.zeros(2)
    new = Tensor(np.log(np.full(2, 1 + 2 * eps)))
    out = clipped_surrogate(new, old, np.array([1.5, -1.5]), eps).data
    assert out[0] == pytest.approx((1 + eps) * 1.5)
    # For negative advantages the unclipped, more pessimistic term wins.
    assert out[1] == pytest.approx((1 + 2 * eps) * -1.5)


# -- ppo_update -----------------------------------------------------------------------

def rollouts(model, w, placements, advs):
    ctx = model.context(w.graph)
    dist = model.distribution(ctx, w.topology.num_devices)
    trajs = []
    for a, adv in zip(placements, advs):
        a = np.asarray(a)
        rep = simulate(w.graph, a, w.topology)
        node_lp = dist.log_probs.data[ctx.decision_nodes, a[ctx.decision_nodes]]
        trajs.append(Trajectory(w.name, a, float(node_lp.sum()), rep, reward_fn(rep), adv, node_lp))
    return trajs, {w.name: (ctx, w.topology.num_devices)}, dist


@pytest.mark.parametrize("ratio", ["per_node", "joint"])
def test_zero_advantage_leaves_params_unchanged(ratio):
    model, w = small_model(), fork_workload()
    cfg = QUICK.with_(entropy_coef=0.0, ratio=ratio)
    trajs, ctxs, _ = rollouts(model, w, [[0] * 6, [1, 0, 1, 0, 1, 0]], [0.0, 0.0])
    before = model.params.snapshot()
    stats = ppo_update(model, Adam(model.params, lr=1e-2), trajs, ctxs, cfg,
                       np.random.default_rng(0))
    assert all(g == 0.0 for g in stats["grad_norm"])
    after = model.params.snapshot()
    assert all(np.array_equal(before[k], after[k]) for k in before)


@pytest.mark.parametrize("ratio", ["per_node", "joint"])
def test_bandit_update_prefers_better_placement(ratio):
    g = make_graph(2, [(0, 1)], out_bytes=[5, 0])
    w = Workload("bandit", g, uniform_topology(2, bandwidth=1.0))
    model = small_model(seed=3)
    good, bad = [0, 0], [0, 1]
    assert simulate(g, good, w.topology).makespan < simulate(g, bad, w.topology).makespan
    trajs, ctxs, dist = rollouts(model, w, [good, bad], [1.0, -1.0])
    p_before = np.exp(dist.log_probs.data[1, 0])
    cfg = TrainConfig(ppo_epochs=1, minibatch=2, entropy_coef=0.0, ratio=ratio)
    ppo_update(model, Adam(model.params, lr=1e-3), trajs, ctxs, cfg, np.random.default_rng(0))
    p_after = np.exp(model.distribution(ctxs["bandit"][0], 2).log_probs.data[1, 0])
    assert p_after > p_before


def test_gradient_reaches_gnn():
    model, w = small_model(), fork_workload()
    trajs, ctxs, _ = rollouts(model, w, [[0] * 6, [1, 0, 1, 0, 1, 0]], [1.0, -1.0])
    before = model.params.snapshot()
    ppo_update(model, Adam(model.params, lr=1e-3), trajs, ctxs, QUICK, np.random.default_rng(0))
    gnn = [k for k in before if k.startswith("gnn/")]
    assert gnn
    assert any(not np.array_equal(before[k], model.params[k].data) for k in gnn)


def test_nan_loss_aborts_with_dump(tmp_path):
    model, w = small_model(), fork_workload()
    trajs, ctxs, _ = rollouts(model, w, [[0] * 6], [math.nan])
    dump = tmp_path / "dump.json"
    with pytest.raises(TrainingError):
        ppo_update(model, Adam(model.params), trajs, ctxs, QUICK.with_(dump_path=str(dump)),
                   np.random.default_rng(0))
    assert "non-finite" in dump.read_text()


# -- training loops -------------------------------------------------------------------

def test_training_is_deterministic(tmp_path):
    ws = [fork_workload("a"), chain_workload(6, name="b")]
    cfg = QUICK.with_(graphs_per_update=1, seed=4)
    for i in range(2):
        train(ws, cfg, model_config=SMALL).write_csv(tmp_path / f"{i}.csv")
    assert (tmp_path / "0.csv").read_bytes() == (tmp_path / "1.csv").read_bytes()


def test_curve_has_one_row_per_episode(tmp_path):
    ws = [fork_workload("a"), chain_workload(6, name="b")]
    cfg = QUICK.with_(graphs_per_update=2)
    result = train(ws, cfg, model_config=SMALL)
    assert len(result.curve) == cfg.episodes == 24
    result.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "episode,graph,reward,makespan,best_makespan,valid"
    assert len(lines) == 25
    best = {}
    for row in result.curve:
        if row["valid"]:
            best[row["graph"]] = min(best.get(row["graph"], math.inf), row["makespan"])
        assert row["best_makespan"] <= best.get(row["graph"], math.inf)


def test_batch_of_one_equals_individual_training():
    w = fork_workload()
    a = train([w], QUICK.with_(mode="one"), model_config=SMALL)
    b = train([w], QUICK.with_(mode="batch", graphs_per_update=1), model_config=SMALL)
    assert a.curve == b.curve
    snap = b.model.params.snapshot()
    assert all(np.array_equal(v, snap[k]) for k, v in a.model.params.snapshot().items())


def exhaustive_optimum(w):
    n = w.graph.num_nodes
    return min(r.makespan for r in (simulate(w.graph, p, w.topology)
                                    for p in itertools.product(range(2), repeat=n)) if r.valid)


def test_chain_converges_to_single_device_optimum():
    w = chain_workload()
    opt = exhaustive_optimum(w)
    assert opt == 10.0
    cfg = TrainConfig(updates=31, episodes_per_update=16)
    bests = []
    for seed in range(3):
        result = train([w], cfg.with_(seed=seed), model_config=SMALL)
        # Sampled episodes only, so the initial greedy decode cannot count.
        sampled = [r["makespan"] for r in result.curve[:500] if r["valid"]]
        bests.append(min(sampled))
    assert np.mean(bests) == pytest.approx(opt)


def test_finetune_zero_steps_is_zeroshot(tmp_path):
    w = fork_workload()
    model = train([chain_workload(6)], QUICK, model_config=SMALL).model
    ckpt = tmp_path / "m.ckpt"
    model.save(ckpt)
    placement, rep = zeroshot(ckpt, w)
    assert zeroshot(ckpt, w) == (placement, rep)
    result = finetune(ckpt, w, 0, QUICK)
    assert result.curve == []
    assert result.greedy_start["fork"] == result.greedy_final["fork"] == rep
    assert result.best_makespan("fork") == (rep.makespan if rep.valid else math.inf)
    # Fine-tuning a live model leaves it untouched.
    before = model.params.snapshot()
    finetune(model, w, 2, QUICK)
    assert all(np.array_equal(v, model.params[k].data) for k, v in before.items())


def test_incompatible_checkpoint(tmp_path):
    ckpt = tmp_path / "m.ckpt"
    small_model().save(ckpt)
    with pytest.raises(CheckpointError):
        GdpModel.load(ckpt, config=ModelConfig(hidden=32))
    with pytest.raises(CheckpointError):
        GdpModel.load(ckpt, config=SMALL.__class__(**{**SMALL.__dict__, "attention": False}))
    (tmp_path / "m.json").unlink()
    with pytest.raises(CheckpointError):
        GdpModel.load(ckpt)


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(mode="online")
    with pytest.raises(ParameterError):
        TrainConfig(clip_eps=1.0)
    with pytest.raises(ParameterError):
        TrainConfig(episodes_per_update=0)
    with pytest.raises(ParameterError):
        TrainConfig.from_dict({"updates": 3, "lr_decay": 0.9})
    assert TrainConfig.from_dict(QUICK.to_dict()) == QUICK
    with pytest.raises(ParameterError):
        train([w := fork_workload(), w], QUICK, model_config=SMALL)
    with pytest.raises(ParameterError):
        train([Workload("big", w.graph, uniform_topology(5))], QUICK, model_config=SMALL)


# -- ablation -------------------------------------------------------------------------

def test_ablation_rows_and_variants(tmp_path):
    suite = [fork_workload("a"), chain_workload(6, name="b")]
    rep = ablate(["full", "no_attention", "no_superposition"], suite,
                 QUICK.with_(updates=1, graphs_per_update=2), base=SMALL)
    keys = [(r["variant"], r["graph"]) for r in rep.rows]
    assert sorted(keys) == sorted(itertools.product(["full", "no_attention", "no_superposition"],
                                                    ["a", "b"]))
    assert all(np.isfinite(rep.median_best(v)) for v in ("full", "no_attention"))
    rep.write_csv(tmp_path / "abl.csv")
    assert len((tmp_path / "abl.csv").read_text().splitlines()) == 7
    with pytest.raises(ParameterError):
        ablate(["tiny"], suite, QUICK, base=SMALL)


def test_full_and_no_superposition_agree_at_init():
    w = fork_workload()
    full = small_model(seed=2)
    plain = small_model(seed=5, superposition=False)
    for k in plain.params:
        plain.params.assign(k, full.params[k].data)
    ctx = full.context(w.graph)
    a = full.distribution(ctx, 2).log_probs.data
    b = plain.distribution(ctx, 2).log_probs.data
    assert np.array_equal(a, b)
