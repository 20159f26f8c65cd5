import json

import numpy as np
import pytest

from phraseboost.acoustic import (
    EmissionMatrix,
    EmissionStepModel,
    TableStepModel,
    load_emissions,
    save_emissions,
    save_step_model,
    synth_ctc_emissions,
    table_step_model,
)
from phraseboost.context import tokenize
from phraseboost.decoding import DecodeConfig, ctc_greedy_boosted
from phraseboost.errors import EmissionFormatError, StepModelError

from conftest import log_softmax, random_emissions


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        em = random_emissions(rng, T=7, V=5)
        p = tmp_path / "em.tbt"
        save_emissions(em, p)
        loaded = load_emissions(p, blank_id=0)
        assert loaded.logprobs.tobytes() == em.logprobs.tobytes()
        assert loaded.num_frames == 7 and loaded.vocab_size == 5

    def test_header_shape(self, tmp_path):
        p = tmp_path / "em.tbt"
        rng = np.random.default_rng(1)
        save_emissions(random_emissions(rng, 2, 3), p)
        header = json.loads(p.read_bytes().split(b"\n", 1)[0])
        assert header == {"magic": "TBT1", "shape": [2, 3], "dtype": "f32"}

    def test_zero_frames_rejected(self, tmp_path):
        p = tmp_path / "bad.tbt"
        p.write_bytes(json.dumps({"magic": "TBT1", "shape": [0, 3], "dtype": "f32"}).encode() + b"\n")
        with pytest.raises(EmissionFormatError, match="shape"):
            load_emissions(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.tbt"
        p.write_bytes(b'{"magic":"XXXX","shape":[1,2],"dtype":"f32"}\n' + b"\x00" * 8)
        with pytest.raises(EmissionFormatError, match="magic"):
            load_emissions(p)

    def test_short_payload(self, tmp_path):
        p = tmp_path / "bad.tbt"
        p.write_bytes(b'{"magic":"TBT1","shape":[2,3],"dtype":"f32"}\n' + b"\x00" * 8)
        with pytest.raises(EmissionFormatError, match="payload"):
            load_emissions(p)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "bad.tbt"
        p.write_bytes(b"\x00" * 16)
        with pytest.raises(EmissionFormatError):
            load_emissions(p)

    def test_larger_matrix(self, tmp_path):
        rng = np.random.default_rng(2)
        em = random_emissions(rng, T=50, V=1024)
        p = tmp_path / "em.tbt"
        save_emissions(em, p)
        loaded = load_emissions(p)
        assert loaded.num_frames == 50 and loaded.vocab_size == 1024

    def test_non_normalized_strict(self, tmp_path):
        p = tmp_path / "bad.tbt"
        raw = np.zeros((2, 3), dtype="<f4")  # rows sum to 3, not 1
        p.write_bytes(b'{"magic":"TBT1","shape":[2,3],"dtype":"f32"}\n' + raw.tobytes())
        with pytest.raises(EmissionFormatError, match="normalized"):
            load_emissions(p)
        with pytest.warns(UserWarning, match="normalized"):
            load_emissions(p, strict=False)

    def test_duration(self):
        em = EmissionMatrix(logprobs=log_softmax(np.zeros((10, 4))).astype(np.float32))
        assert em.duration_seconds == pytest.approx(10 * 0.04)
        em2 = EmissionMatrix(
            logprobs=log_softmax(np.zeros((10, 4))).astype(np.float32), frame_duration=0.08
        )
        assert em2.duration_seconds == pytest.approx(0.8)


class TestSynthEmissions:
    def test_margin_property_on_designated_frames(self, letters_vocab):
        target = tokenize("cat", letters_vocab)
        em = synth_ctc_emissions(target, letters_vocab, margin=0.5, seed=3)
        lp = em.logprobs.astype(np.float64)
        argmax = lp.argmax(axis=1)
        emission_frames = [t for t in range(em.num_frames) if argmax[t] != em.blank_id]
        assert len(emission_frames) == len(target)
        for pos, t in enumerate(emission_frames):
            distractor = int(argmax[t])
            assert distractor != target[pos]
            assert lp[t, distractor] - lp[t, target[pos]] == pytest.approx(0.5, abs=1e-5)

    def test_rows_normalized(self, letters_vocab):
        em = synth_ctc_emissions(tokenize("dog", letters_vocab), letters_vocab, 0.7, seed=9)
        lse = np.log(np.exp(em.logprobs.astype(np.float64)).sum(axis=1))
        assert np.abs(lse).max() < 1e-4

    def test_baseline_greedy_misses_target(self, letters_vocab):
        target = tokenize("cat", letters_vocab)
        em = synth_ctc_emissions(target, letters_vocab, margin=0.5, seed=3)
        base = ctc_greedy_boosted(em, None, DecodeConfig(lam=0.0), vocab=letters_vocab)
        assert base.tokens != target

    def test_clean_positions_dominated_by_target(self, letters_vocab):
        target = tokenize("cat", letters_vocab)
        em = synth_ctc_emissions(
            target, letters_vocab, margin=0.5, seed=4, boost_positions=[0]
        )
        argmax = em.logprobs.argmax(axis=1)
        emission_frames = [t for t in range(em.num_frames) if argmax[t] != em.blank_id]
        assert int(argmax[emission_frames[1]]) == target[1]
        assert int(argmax[emission_frames[2]]) == target[2]
        assert int(argmax[emission_frames[0]]) != target[0]

    def test_determinism(self, letters_vocab):
        target = tokenize("cat", letters_vocab)
        a = synth_ctc_emissions(target, letters_vocab, 0.5, seed=11)
        b = synth_ctc_emissions(target, letters_vocab, 0.5, seed=11)
        assert a.logprobs.tobytes() == b.logprobs.tobytes()
        c = synth_ctc_emissions(target, letters_vocab, 0.5, seed=12)
        assert a.logprobs.tobytes() != c.logprobs.tobytes()

    def test_margin_zero_rejected(self, letters_vocab):
        with pytest.raises(ValueError, match="margin"):
            synth_ctc_emissions(tokenize("cat", letters_vocab), letters_vocab, 0.0, seed=0)

    def test_blank_target_rejected(self, letters_vocab):
        with pytest.raises(ValueError, match="blank"):
            synth_ctc_emissions([0], letters_vocab, 0.5, seed=0)

    def test_empty_target_rejected(self, letters_vocab):
        with pytest.raises(ValueError, match="empty"):
            synth_ctc_emissions([], letters_vocab, 0.5, seed=0)


def make_rows(V, **overrides):
    logits = np.full(V, -8.0)
    for tok, val in overrides.items():
        logits[int(tok)] = val
    return log_softmax(logits).tolist()


class TestTableStepModel:
    def test_default_row_only(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "transducer", "default": make_rows(4, **{"0": 2.0})}))
        model = table_step_model(p)
        assert model.vocab_size == 4
        assert (model.logprobs(None, 0) == model.logprobs(3, 9)).all()

    def test_context_specific_row(self, tmp_path):
        p = tmp_path / "m.json"
        spec = {
            "flavor": "transducer",
            "default": make_rows(4, **{"0": 2.0}),
            "rows": {"2": make_rows(4, **{"1": 2.0})},
        }
        p.write_text(json.dumps(spec))
        model = table_step_model(p)
        assert model.logprobs(2, 0).argmax() == 1
        assert model.logprobs(1, 0).argmax() == 0

    def test_aed_requires_eos(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "aed", "default": make_rows(4)}))
        with pytest.raises(StepModelError, match="eos_id"):
            table_step_model(p)

    def test_aed_empty_prefix_row(self, tmp_path):
        p = tmp_path / "m.json"
        spec = {
            "flavor": "aed",
            "eos_id": 3,
            "default": make_rows(4),
            "rows": {"": make_rows(4, **{"2": 2.0})},
        }
        p.write_text(json.dumps(spec))
        model = table_step_model(p)
        row = model.logprobs((), 0)
        assert row.argmax() == 2
        assert np.isfinite(row[3])

    def test_row_not_normalized(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "transducer", "default": [0.0, 0.0, 0.0]}))
        with pytest.raises(StepModelError, match="normalized"):
            table_step_model(p)

    def test_missing_default(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "transducer"}))
        with pytest.raises(StepModelError, match="default"):
            table_step_model(p)

    def test_bad_flavor(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "ctc", "default": make_rows(4)}))
        with pytest.raises(StepModelError, match="flavor"):
            table_step_model(p)

    def test_row_length_mismatch(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(
            json.dumps(
                {"flavor": "transducer", "default": make_rows(4), "rows": {"1": make_rows(5)}}
            )
        )
        with pytest.raises(StepModelError, match="length"):
            table_step_model(p)

    def test_save_round_trip(self, tmp_path):
        model = TableStepModel(
            flavor="aed",
            default_row=np.asarray(make_rows(4), dtype=np.float32),
            rows={"1": np.asarray(make_rows(4, **{"1": 3.0}), dtype=np.float32)},
            eos_id=3,
        )
        p = tmp_path / "m.json"
        save_step_model(model, p)
        loaded = table_step_model(p)
        assert loaded.flavor == "aed" and loaded.eos_id == 3
        assert (loaded.logprobs((1,), 1) == model.logprobs((1,), 1)).all()

    def test_determinism(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"flavor": "transducer", "default": make_rows(4, **{"0": 2.0})}))
        model = table_step_model(p)
        a = model.logprobs(1, 0)
        b = model.logprobs(1, 0)
        assert (a == b).all()


def test_emission_step_model(letters_vocab):
    rng = np.random.default_rng(7)
    em = random_emissions(rng, T=6, V=letters_vocab.size)
    model = EmissionStepModel(em)
    assert model.flavor == "transducer"
    assert model.vocab_size == letters_vocab.size
    assert (model.logprobs(None, 4) == em.logprobs[4]).all()
    assert (model.logprobs(3, 4) == em.logprobs[4]).all()
