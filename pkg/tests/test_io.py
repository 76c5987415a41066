import json

import numpy as np
import pytest

from bass import io as bio
from bass.errors import InvalidInputError
from bass.sim import builtin_spec, generate

from conftest import random_state_for


class TestMatrixFormat:
    def test_round_trip_is_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = np.concatenate([
            rng.normal(size=50),
            rng.normal(size=25) * 1e-200,
            rng.normal(size=25) * 1e200,
        ]).reshape(10, 10)
        path = tmp_path / "m.tsv"
        bio.write_matrix(path, arr, name="m", block=1)
        back, meta = bio.read_matrix(path)
        np.testing.assert_array_equal(back, arr)
        assert meta["name"] == "m" and meta["block"] == "1"

    def test_header_dims_checked(self, tmp_path):
        path = tmp_path / "m.tsv"
        bio.write_matrix(path, np.eye(2), name="m")
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace("rows=2", "rows=3")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(InvalidInputError):
            bio.read_matrix(path)

    def test_non_matrix_file_rejected(self, tmp_path):
        path = tmp_path / "junk.tsv"
        path.write_text("1\t2\n")
        with pytest.raises(InvalidInputError):
            bio.read_matrix(path)


class TestDatasetRoundTrip:
    def test_blocks_preserved(self, tmp_path):
        data, _ = generate(builtin_spec("sim3", n=7, seed=1))
        paths = bio.write_dataset(tmp_path, data)
        back = bio.read_dataset(paths)
        assert back.m == data.m
        np.testing.assert_array_equal(back.Y, data.Y)


class TestSpecAndTruth:
    def test_sim_spec_round_trip(self, tmp_path):
        spec = builtin_spec("sim4", n=33, seed=5)
        path = tmp_path / "spec.txt"
        bio.write_sim_spec(path, spec)
        assert bio.read_sim_spec(path) == spec

    def test_truth_round_trip(self, tmp_path):
        _, truth = generate(builtin_spec("sim1", n=9, seed=2))
        bio.write_truth(tmp_path, truth)
        back = bio.read_truth(tmp_path)
        np.testing.assert_array_equal(back.Lambda_true, truth.Lambda_true)
        np.testing.assert_array_equal(back.activity, truth.activity)
        np.testing.assert_array_equal(back.SigmaDiag_true, truth.SigmaDiag_true)
        assert back.block_dims == truth.block_dims


class TestStateRoundTrip:
    def test_all_fields_preserved(self, tmp_path, data_426):
        state = random_state_for(data_426, 3, seed=3)
        bio.write_state(tmp_path, state)
        back = bio.read_state(tmp_path)
        for name in ("Lambda", "Theta", "Delta", "Phi", "Tau", "Z",
                     "Eta", "Gamma_", "Pi", "SigmaDiag"):
            np.testing.assert_array_equal(getattr(back, name), getattr(state, name))
        assert back.hyper == state.hyper


class TestManifest:
    def test_manifest_contents(self, tmp_path):
        inp = tmp_path / "in.tsv"
        bio.write_matrix(inp, np.eye(2), name="in")
        path = bio.write_manifest(
            tmp_path, command=["bass", "x"], config={"a": 1}, seeds=[3, 4],
            inputs=[inp], outputs=["out"], wall_time=0.5,
        )
        doc = json.loads(path.read_text())
        assert doc["command"] == ["bass", "x"]
        assert doc["seeds"] == [3, 4]
        assert str(inp) in doc["input_digests"]
        assert doc["input_digests"][str(inp)] == bio.sha256_file(inp)
        assert set(doc["versions"]) == {"bass", "numpy", "scipy", "python"}
