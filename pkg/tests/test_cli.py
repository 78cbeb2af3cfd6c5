import json

import numpy as np
import pytest

from ovcert.cli import main


def run(args):
    return main([str(a) for a in args])


def read_records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def scrub(rec):
    return {k: v for k, v in rec.items() if k != "wall_time"}


@pytest.fixture()
def dataset(tmp_path):
    data = tmp_path / "data"
    assert run([
        "gen-synthetic", "--out", data, "--seed", 7, "--k", 5, "--d", 16,
        "--dim-in", 8, "--n-inputs", 6, "--n-prompts", 6, "--jitter", 0.08,
    ]) == 0
    return data


CERT_ARGS = ["--sigma", 0.25, "--n0", 40, "--n", 800, "--np", 400, "--seed", 3]


class TestGenSynthetic:
    def test_deterministic_bytes(self, tmp_path):
        args = ["gen-synthetic", "--seed", 5, "--k", 4, "--d", 8, "--dim-in", 6,
                "--n-inputs", 4, "--n-prompts", 4, "--jitter", 0.1]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(args + ["--out", a]) == 0
        assert run(args + ["--out", b]) == 0
        for rel in ["dataset.json", "inputs.npy", "labels.npy",
                    "prompts/prompt-000.ovcp", "prompts/prompt-003.ovcp"]:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_zero_jitter_constant_family(self, tmp_path):
        out = tmp_path / "z"
        assert run(["gen-synthetic", "--out", out, "--seed", 1, "--k", 3,
                    "--d", 6, "--dim-in", 4, "--n-inputs", 2, "--n-prompts", 5,
                    "--jitter", 0.0]) == 0
        from ovcert.cache import load_prompt_head
        heads = [load_prompt_head(p) for p in sorted((out / "prompts").glob("*.ovcp"))]
        for h in heads[1:]:
            assert np.array_equal(h.matrix, heads[0].matrix)

    def test_bad_counts_exit_2(self, tmp_path):
        assert run(["gen-synthetic", "--out", tmp_path / "x", "--n-prompts", 1]) == 2


class TestBuildAndFit:
    def test_build_fit_sizes(self, dataset, tmp_path):
        cache = tmp_path / "cache"
        assert run(["build-cache", "--data", dataset, "--cache-dir", cache] + CERT_ARGS) == 0
        ovce = sorted(cache.glob("emb_*.ovce"))
        assert len(ovce) == 6
        assert run(["fit-mvn", "--cache-dir", cache, "--sigma", 0.25]) == 0
        ovcm = sorted(cache.glob("mvn_*.ovcm"))
        assert len(ovcm) == 6
        # mvn files ~ (D+1)/(n0+n) of embedding cache size
        ratio = ovcm[0].stat().st_size / ovce[0].stat().st_size
        assert ratio == pytest.approx((16 + 1) / 840, rel=0.10)

    def test_rebuild_idempotent(self, dataset, tmp_path):
        cache = tmp_path / "cache"
        run(["build-cache", "--data", dataset, "--cache-dir", cache] + CERT_ARGS)
        blob = (sorted(cache.glob("*.ovce"))[0]).read_bytes()
        run(["build-cache", "--data", dataset, "--cache-dir", cache, "--force"] + CERT_ARGS)
        assert (sorted(cache.glob("*.ovce"))[0]).read_bytes() == blob

    def test_fit_without_cache_exit_3(self, tmp_path):
        assert run(["fit-mvn", "--cache-dir", tmp_path, "--sigma", 0.25]) == 3


class TestCertifyModes:
    def pipeline(self, dataset, tmp_path):
        cache, out = tmp_path / "cache", tmp_path / "out"
        assert run(["certify", "--mode", "standard", "--data", dataset,
                    "--out", out, "--cache-dir", cache, "--prompts", "all"]
                   + CERT_ARGS) == 0
        assert run(["build-cache", "--data", dataset, "--cache-dir", cache] + CERT_ARGS) == 0
        assert run(["fit-mvn", "--cache-dir", cache, "--sigma", 0.25]) == 0
        return cache, out

    def test_standard_then_ovc_radius_equality(self, dataset, tmp_path):
        cache, out = self.pipeline(dataset, tmp_path)
        assert run(["certify", "--mode", "ovc", "--data", dataset, "--out", out,
                    "--cache-dir", cache, "--prompts", "all"] + CERT_ARGS) == 0
        std = {(r["input_id"], r["prompt_id"]): r
               for r in read_records(out / "records_standard.jsonl")}
        ovc = read_records(out / "records_ovc.jsonl")
        assert len(ovc) == len(std)
        for rec in ovc:
            ref = std[(rec["input_id"], rec["prompt_id"])]
            assert rec["radius"] == ref["radius"]
            assert rec["predicted_class"] == ref["predicted_class"]
            assert rec["encoder_calls"] == 0
        summary = json.loads((out / "summary_ovc.json").read_text())
        assert summary["total_encoder_calls"] == 0

    def test_irs_mode_runs_with_meta(self, dataset, tmp_path):
        cache, out = self.pipeline(dataset, tmp_path)
        assert run(["certify", "--mode", "irs", "--data", dataset, "--out", out,
                    "--cache-dir", cache, "--prompts", "novel"] + CERT_ARGS) == 0
        summary = json.loads((out / "summary_irs.json").read_text())
        assert "fast_path_fraction" in summary
        recs = read_records(out / "records_irs.jsonl")
        assert all(r["method"].startswith("MODIFIED_IRS") for r in recs)

    def test_mvn_mode(self, dataset, tmp_path):
        cache, out = self.pipeline(dataset, tmp_path)
        assert run(["certify", "--mode", "mvn", "--data", dataset, "--out", out,
                    "--cache-dir", cache, "--prompts", "all"] + CERT_ARGS) == 0
        recs = read_records(out / "records_mvn.jsonl")
        assert all(r["heuristic"] and r["encoder_calls"] == 0 for r in recs)

    def test_missing_cache_exit_3(self, dataset, tmp_path):
        out = tmp_path / "out"
        code = run(["certify", "--mode", "ovc", "--data", dataset, "--out", out,
                    "--cache-dir", tmp_path / "nothing"] + CERT_ARGS)
        assert code == 3

    def test_corrupt_cache_exit_4(self, dataset, tmp_path):
        cache, out = self.pipeline(dataset, tmp_path)
        victim = sorted(cache.glob("*.ovce"))[0]
        blob = bytearray(victim.read_bytes())
        blob[100] ^= 0xFF
        victim.write_bytes(bytes(blob))
        code = run(["certify", "--mode", "ovc", "--data", dataset,
                    "--out", tmp_path / "out2", "--cache-dir", cache,
                    "--prompts", "all"] + CERT_ARGS)
        assert code == 4

    def test_rerun_reproduces_records(self, dataset, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        args = ["certify", "--mode", "standard", "--data", dataset,
                "--prompts", "novel"] + CERT_ARGS
        assert run(args + ["--out", out1]) == 0
        assert run(args + ["--out", out2]) == 0
        a = [scrub(r) for r in read_records(out1 / "records_standard.jsonl")]
        b = [scrub(r) for r in read_records(out2 / "records_standard.jsonl")]
        assert a == b

    def test_resume_skips_done_pairs(self, dataset, tmp_path):
        out = tmp_path / "out"
        args = ["certify", "--mode", "standard", "--data", dataset,
                "--out", out, "--prompts", "novel"] + CERT_ARGS
        assert run(args) == 0
        n_before = len(read_records(out / "records_standard.jsonl"))
        assert run(args) == 0  # resume: nothing new to do
        assert len(read_records(out / "records_standard.jsonl")) == n_before

    def test_workers_order_stable(self, dataset, tmp_path):
        o1, o2 = tmp_path / "w1", tmp_path / "w2"
        args = ["certify", "--mode", "standard", "--data", dataset,
                "--prompts", "novel"] + CERT_ARGS
        assert run(args + ["--out", o1, "--workers", 1]) == 0
        assert run(args + ["--out", o2, "--workers", 3]) == 0
        a = [scrub(r) for r in read_records(o1 / "records_standard.jsonl")]
        b = [scrub(r) for r in read_records(o2 / "records_standard.jsonl")]
        assert a == b

    def test_skip_every_kth(self, dataset, tmp_path):
        out = tmp_path / "out"
        assert run(["certify", "--mode", "standard", "--data", dataset,
                    "--out", out, "--prompts", "novel", "--skip", 2] + CERT_ARGS[:-2]
                   + ["--seed", 3]) == 0
        recs = read_records(out / "records_standard.jsonl")
        assert sorted({r["input_id"] for r in recs}) == [0, 2, 4]

    def test_env_cache_dir(self, dataset, tmp_path, monkeypatch):
        cache = tmp_path / "envcache"
        monkeypatch.setenv("OVC_CACHE_DIR", str(cache))
        assert run(["build-cache", "--data", dataset] + CERT_ARGS) == 0
        assert len(list(cache.glob("*.ovce"))) == 6


class TestPromptSplit:
    def test_seventy_ten_protocol(self):
        # 80 prompts default-split 70 known / 10 novel, disjoint, reproducible
        from ovcert.cli import _split_prompts

        ids = [f"prompt-{i:03d}" for i in range(80)]
        known, novel = _split_prompts(ids, max(1, round(80 / 8)), split_seed=4)
        assert len(known) == 70 and len(novel) == 10
        assert not set(known) & set(novel)
        assert set(known) | set(novel) == set(ids)
        again = _split_prompts(ids, 10, split_seed=4)
        assert (known, novel) == again

    def test_bad_novel_count(self):
        from ovcert.cli import _split_prompts
        from ovcert.errors import ConfigError

        with pytest.raises(ConfigError):
            _split_prompts(["a", "b"], 2, split_seed=0)


class TestReport:
    def test_report_outputs(self, dataset, tmp_path):
        cache, out = tmp_path / "cache", tmp_path / "out"
        common = ["--data", dataset, "--out", out, "--cache-dir", cache,
                  "--prompts", "novel"] + CERT_ARGS
        assert run(["certify", "--mode", "standard"] + common) == 0
        assert run(["build-cache", "--data", dataset, "--cache-dir", cache] + CERT_ARGS) == 0
        assert run(["fit-mvn", "--cache-dir", cache, "--sigma", 0.25]) == 0
        assert run(["certify", "--mode", "ovc"] + common) == 0
        assert run(["certify", "--mode", "mvn"] + common) == 0
        rep = tmp_path / "rep"
        assert run(["report", "--out", rep, "--records",
                    out / "records_standard.jsonl", out / "records_ovc.jsonl",
                    out / "records_mvn.jsonl"]) == 0
        assert (rep / "curve_STANDARD.csv").exists()
        assert (rep / "speedup.json").exists()
        # the cached path reproduces the standard radii: scatter on the diagonal
        scatter = (rep / "scatter_OVC_vs_STANDARD.csv").read_text().splitlines()[1:]
        for line in scatter:
            _, _, r_std, r_ovc = line.split(",")
            assert r_std == r_ovc
        speed = json.loads((rep / "speedup.json").read_text())
        assert "speedup_vs_STANDARD" in speed["OVC"]

    def test_single_record_step_curve(self, tmp_path):
        rec = {"manifest": "m", "input_id": 0, "prompt_id": "p", "sigma": 0.25,
               "method": "STANDARD", "predicted_class": 1, "abstained": False,
               "radius": 0.5, "p_a_lower": 0.9, "confidence": 0.999,
               "heuristic": False, "samples_used": 10, "encoder_calls": 10,
               "wall_time": 0.1}
        f = tmp_path / "r.jsonl"
        f.write_text(json.dumps(rec) + "\n")
        rep = tmp_path / "rep"
        assert run(["report", "--records", f, "--out", rep]) == 0
        lines = (rep / "curve_STANDARD.csv").read_text().splitlines()
        assert lines[0] == "radius,certified_accuracy"
        assert lines[1] == "0,1"
        assert lines[2] == "0.5,1"

    def test_empty_records_exit_2(self, tmp_path):
        f = tmp_path / "empty.jsonl"
        f.write_text("")
        assert run(["report", "--records", f, "--out", tmp_path / "rep"]) == 2
