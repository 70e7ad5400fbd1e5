import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from aasgen import cli, pipeline
from aasgen.diffusion import LatentState
from aasgen.embedder import embed, embed_unconditional
from aasgen.errors import ConfigError, TooFewSamples
from aasgen.masks import ClassMask, read_pgm, write_pgm
from aasgen.rng import initial_latent
from aasgen.sampler import AASConfig, read_telemetry_csv
from aasgen.toy import ToyDenoiser, read_toy_world

from oracles import plain_cfg_ddim

FAST = {"num_steps": 20}


def _mask(fill_rows):
    a = np.ones((8, 10), dtype=np.uint8)
    for cid, rows in fill_rows.items():
        a[rows] = cid
    return ClassMask.from_array(a)


@pytest.fixture
def workspace(tmp_path):
    bank = tmp_path / "bank.json"
    src = resources.files("aasgen").joinpath("data/marine_style_bank.json")
    bank.write_text(src.read_text(encoding="utf-8"), encoding="utf-8")
    masks = tmp_path / "masks"
    masks.mkdir()
    write_pgm(masks / "a.pgm", _mask({2: slice(0, 3)}))
    write_pgm(masks / "b.pgm", _mask({2: slice(0, 2), 0: slice(5, 6)}))
    write_pgm(masks / "c.pgm", _mask({}))
    return tmp_path


def _prompts(ws, n=3, seed=7):
    out = ws / "prompts.jsonl"
    assert pipeline.cmd_prompt(ws / "bank.json", ws / "masks", out, seed) == 0
    if n < 3:
        lines = out.read_text().splitlines()[:n]
        out.write_text("\n".join(lines) + "\n")
    return out


# -- prompt ----------------------------------------------------------------------

def test_prompt_one_line_per_mask(workspace):
    out = _prompts(workspace)
    records = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(records) == 3
    assert [Path(r["mask"]).name for r in records] == ["a.pgm", "b.pgm", "c.pgm"]
    assert [r["seed"] for r in records] == [7, 6, 5]
    assert all(r["prompt"].startswith("This image contains ") for r in records)


def test_prompt_rerun_byte_identical(workspace):
    first = _prompts(workspace).read_bytes()
    assert _prompts(workspace).read_bytes() == first


def test_prompt_bad_mask_gets_error_record(workspace):
    write_pgm(workspace / "masks" / "b.pgm", _mask({9: slice(0, 2)}))
    out = workspace / "p.jsonl"
    assert pipeline.cmd_prompt(workspace / "bank.json", workspace / "masks", out, 0) == 1
    records = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(records) == 3
    assert "error" in records[1] and "UnknownClassId" in records[1]["error"]
    assert "prompt" in records[0] and "prompt" in records[2]


def test_prompt_invalid_inputs(workspace, tmp_path):
    (tmp_path / "bad.json").write_text('{"classes": []}')
    assert pipeline.cmd_prompt(tmp_path / "bad.json", workspace / "masks", tmp_path / "o", 0) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert pipeline.cmd_prompt(workspace / "bank.json", empty, tmp_path / "o", 0) == 2


# -- config ----------------------------------------------------------------------

def test_default_config_file_matches_defaults():
    path = Path(__file__).parent.parent / "configs" / "default.json"
    cfg = pipeline.load_run_config(path)
    assert cfg.aas == AASConfig()
    assert cfg.num_samples == 4


def test_overrides_win(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"num_steps": 30, "seed": 3}))
    cfg = pipeline.load_run_config(path, {"num_steps": 10, "kp": None})
    assert cfg.aas.num_steps == 10 and cfg.aas.seed == 3 and cfg.aas.kp == 0.01


@pytest.mark.parametrize("values", [
    {"bogus": 1}, {"num_steps": "ten"}, {"num_samples": 0}, {"tau1": 900}, {"s_init": True},
])
def test_invalid_config(values):
    with pytest.raises(ConfigError):
        pipeline.build_run_config(values)


def test_invalid_config_exit_code(workspace):
    prompts = _prompts(workspace)
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"s_min": 0.9}))
    assert pipeline.cmd_sample(bad, prompts, workspace / "out") == 2
    bad.write_text("{not json")
    assert pipeline.cmd_sample(bad, prompts, workspace / "out") == 2


def test_workers_env(monkeypatch):
    monkeypatch.setenv("AASGEN_WORKERS", "1")
    assert pipeline.max_workers() == 1
    monkeypatch.setenv("AASGEN_WORKERS", "x")
    assert pipeline.max_workers() >= 1


# -- sample ----------------------------------------------------------------------

def test_sample_cardinality(workspace):
    prompts = _prompts(workspace, n=2)
    out = workspace / "out"
    assert pipeline.cmd_sample(None, prompts, out, overrides=FAST) == 0
    assert len(list(out.glob("*.f32"))) == 8
    assert len(list(out.glob("*.csv"))) == 8
    meta = json.loads((out / "0001_002.json").read_text())
    assert meta["seed"] == 0 ^ 6
    assert meta["shape"] == [8]


def test_sample_default_s_bounds(workspace):
    prompts = _prompts(workspace, n=2)
    out = workspace / "out"
    assert pipeline.cmd_sample(None, prompts, out) == 0
    rows = [r for p in out.glob("*.csv") for r in read_telemetry_csv(p)]
    assert len(rows) == 8 * 50
    assert all(0.05 <= r.s_before <= 0.5 and 0.05 <= r.s_after <= 0.5 for r in rows)


def test_baseline_matches_vanilla(workspace):
    prompts = _prompts(workspace, n=1)
    out = workspace / "out"
    assert pipeline.cmd_sample(None, prompts, out, baseline=True, overrides=FAST) == 0
    cfg = pipeline.load_run_config(None, FAST)
    world = pipeline._world_for(cfg)
    rec = json.loads(prompts.read_text().splitlines()[0])
    mask = read_pgm(rec["mask"])
    for j in range(4):
        meta = json.loads((out / f"0000_{j:03d}.json").read_text())
        z = np.fromfile(out / f"0000_{j:03d}.f32", dtype="<f4")
        ref = plain_cfg_ddim(LatentState(initial_latent(meta["seed"], 8), 1000), embed(rec["prompt"], 64),
                             embed_unconditional(64), mask, ToyDenoiser(world),
                             world.noise_schedule.alpha_bars, 20, 7.5, 1.0)[-1]
        np.testing.assert_array_equal(z, ref.astype("<f4"))


def test_output_tree_byte_identical(workspace, monkeypatch):
    prompts = _prompts(workspace, n=2)
    a, b = workspace / "a", workspace / "b"
    assert pipeline.cmd_sample(None, prompts, a, overrides=FAST) == 0
    monkeypatch.setenv("AASGEN_WORKERS", "1")
    assert pipeline.cmd_sample(None, prompts, b, overrides=FAST) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sample_skips_error_records(workspace):
    prompts = _prompts(workspace, n=2)
    with prompts.open("a") as fh:
        fh.write(json.dumps({"mask": "x.pgm", "seed": 1, "error": "UnknownClassId"}) + "\n")
    out = workspace / "out"
    assert pipeline.cmd_sample(None, prompts, out, overrides=FAST) == 0
    assert len(list(out.glob("*.f32"))) == 8


def test_sample_divergence_exit(workspace, monkeypatch):
    prompts = _prompts(workspace, n=1)

    def explode(self, z, t, mask, embedding, lam):
        return np.full(z.z.shape, 1e308)

    monkeypatch.setattr(ToyDenoiser, "predict", explode)
    assert pipeline.cmd_sample(None, prompts, workspace / "out", overrides=FAST) == 1


# -- metrics ---------------------------------------------------------------------

def test_pairwise_examples():
    assert pipeline.mean_pairwise_distance(np.ones((5, 3))) == 0.0
    assert pipeline.mean_pairwise_distance([[0, 0], [3, 4]]) == 5.0
    X = np.random.default_rng(0).normal(size=(6, 4))
    ref = [np.linalg.norm(X[i] - X[j]) for i in range(6) for j in range(i + 1, 6)]
    assert pipeline.mean_pairwise_distance(X) == pytest.approx(np.mean(ref), rel=1e-12)
    assert pipeline.mean_pairwise_distance(X[::-1]) == pytest.approx(np.mean(ref), rel=1e-12)
    with pytest.raises(TooFewSamples):
        pipeline.mean_pairwise_distance([[1.0, 2.0]])


def test_fidelity_rule():
    mu = np.zeros(4)
    assert pipeline.within_fidelity(np.full(4, 1.5), mu, 0.5)
    assert not pipeline.within_fidelity(np.full(4, 1.6), mu, 0.5)
    assert pipeline.fidelity_rate([[0, 0, 0, 0], [9, 9, 9, 9]], mu, 0.5) == 0.5


def _sampled(workspace, **kw):
    prompts = _prompts(workspace, n=2)
    out = workspace / "out"
    assert pipeline.cmd_sample(None, prompts, out, overrides=FAST, **kw) == 0
    tw = workspace / "world.json"
    assert cli.main(["toy-world", "--out", str(tw)]) == 0
    return out, tw


def test_metrics_report(workspace):
    out, tw = _sampled(workspace)
    report_path = workspace / "report.json"
    assert pipeline.cmd_metrics(out, tw, report_path) == 0
    report = json.loads(report_path.read_text())
    assert report["diversity_metric"] == "latent_mean_pairwise_l2"
    assert report["sample_count"] == 8
    assert len(report["groups"]) == 2
    assert all(g["diversity"] > 0 for g in report["groups"])
    assert 0.0 <= report["fidelity"] <= 1.0
    assert pipeline.cmd_metrics(out, None, report_path) == 0
    assert json.loads(report_path.read_text())["fidelity"] is None


def test_metrics_permutation_invariant(workspace):
    out, tw = _sampled(workspace)
    world = read_toy_world(tw)
    samples = pipeline.read_samples(out)
    a = pipeline.diversity_report(samples, world)
    b = pipeline.diversity_report(samples[::-1], world)
    assert a["mean_diversity"] == pytest.approx(b["mean_diversity"], rel=1e-12)
    assert a["fidelity"] == b["fidelity"]


def test_metrics_too_few(workspace):
    out, tw = _sampled(workspace)
    for p in out.glob("0000_00[123].*"):
        p.unlink()
    assert pipeline.cmd_metrics(out, tw, workspace / "r.json") == 1
    empty = workspace / "empty"
    empty.mkdir()
    assert pipeline.cmd_metrics(empty, None, workspace / "r.json") == 1


# -- CLI -------------------------------------------------------------------------

def test_cli_end_to_end(workspace, monkeypatch):
    monkeypatch.chdir(workspace)
    assert cli.main(["prompt", "--bank", "bank.json", "--masks", "masks", "--out", "p.jsonl", "--seed", "1"]) == 0
    assert cli.main(["toy-world", "--out", "w.json"]) == 0
    cfg = Path(__file__).parent.parent / "configs" / "default.json"
    assert cli.main(["sample", "--config", str(cfg), "--prompts", "p.jsonl", "--out-dir", "s",
                     "--num-steps", "10", "--num-samples", "2", "--toy-world", "w.json"]) == 0
    assert len(list(Path("s").glob("*.f32"))) == 6
    assert cli.main(["metrics", "--samples", "s", "--toy-world", "w.json", "--out", "m.json"]) == 0
    assert json.loads(Path("m.json").read_text())["sample_count"] == 6


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
