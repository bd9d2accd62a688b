import json
import shlex
import subprocess
import sys


class TestEndToEnd:
    def test_cmd_run_with_adapter_as_generator(self, adapter_env, fixture_dataset_dir, tmp_path):
        """The full pipeline command drives this adapter over the wire."""
        out = tmp_path / "report"
        adapter_cmd = f"{shlex.quote(sys.executable)} -m dare_gen_adapter"
        cmd = [
            "dare", "run",
            "--dataset", str(fixture_dataset_dir),
            "--pipeline", "dare",
            "--generator", "external",
            "--generator-cmd", adapter_cmd,
            "--members", "2",
            "--seeds", "0",
            "--pool-multiplier", "1",
            "--max-tokens", "20",
            "--feature-dim", "16384",
            "--out", str(out),
        ]
        result = subprocess.run(cmd, env=adapter_env, capture_output=True, text=True, timeout=600)
        assert result.returncode == 0, result.stderr[-2000:]

        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        dare_block = report["pipelines"]["dare"]
        assert len(dare_block["per_seed"]) == 1
        assert dare_block["per_seed"][0]["pool_digest"]
        metrics = dare_block["aggregate"]["mean"]
        assert 0.0 <= metrics["micro_f1"] <= 1.0
        assert (out / "runs" / "dare" / "seed_0" / "predictions.jsonl").is_file()
        predictions = [
            json.loads(line)
            for line in (out / "runs" / "dare" / "seed_0" / "predictions.jsonl")
            .read_text()
            .splitlines()
        ]
        assert len(predictions) == 30  # the fixture's test split

    def test_generate_pool_only(self, adapter_env, fixture_dataset_dir, tmp_path):
        out = tmp_path / "pool"
        adapter_cmd = f"{shlex.quote(sys.executable)} -m dare_gen_adapter"
        cmd = [
            "dare", "generate",
            "--dataset", str(fixture_dataset_dir),
            "--generator", "external",
            "--generator-cmd", adapter_cmd,
            "--pool-multiplier", "1",
            "--max-tokens", "20",
            "--seeds", "0",
            "--out", str(out),
        ]
        result = subprocess.run(cmd, env=adapter_env, capture_output=True, text=True, timeout=600)
        assert result.returncode == 0, result.stderr[-2000:]
        manifest = json.loads((out / "pool.json").read_text(encoding="utf-8"))
        assert manifest["sizes"] == {"induce": 30}
        lines = (out / "pool.jsonl").read_text().strip().splitlines()
        assert len(lines) == 30
        for line in lines:
            record = json.loads(line)
            assert record["tokens"].count("ENTITY_A") == 1
            assert record["tokens"].count("ENTITY_B") == 1
            assert len(record["tokens"]) >= 8
