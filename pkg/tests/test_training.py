import json
import math

import numpy as np
import pytest
import torch

from recoproc import training as TR
from recoproc.config import DEFAULT_LAMBDA, ExperimentConfig, OptimizerSchedule, lr_at
from recoproc.data import Dataset, make_pairs
from recoproc.degradations import DegradationSpec, GAUSSIAN_NOISE
from recoproc.errors import ConfigError, DivergedError, NotFound
from recoproc.models import build_recognizer, weights_hash

SMALL = dict(
    processor={"base_channels": 4, "n_resblocks": 1},
    transformer={"n_resblocks": 1, "base_channels": 4},
    recognizer={"width": 4, "num_classes": 4},
    schedule={"lr0": 1e-3, "epochs": 2, "decay_epochs": [2], "batch_size": 8},
    recognizer_schedule={"epochs": 2, "batch_size": 16},
)


def small_config(**kw):
    d = {**SMALL, "task": {"kind": "gaussian_noise", "sigma": 0.1}, **kw}
    return ExperimentConfig.from_dict(d)


@pytest.fixture(scope="module")
def noise_pairs(tiny_train):
    return make_pairs(tiny_train.subset(range(0, 48, 2)), DegradationSpec.make("noise"), 0)


@pytest.fixture(scope="module")
def tiny_R(tiny_train, tiny_val):
    return TR.pretrain_recognizer(small_config(), tiny_train, tiny_val)


class TestSchedule:
    def test_reference_defaults(self):
        s = OptimizerSchedule()
        assert (s.lr0, s.epochs, s.decay_epochs, s.batch_size) == (1e-4, 6, [5, 6], 20)
        assert lr_at(s, 1) == 1e-4
        assert lr_at(s, 4) == 1e-4
        assert lr_at(s, 5) == pytest.approx(1e-5, rel=1e-12)
        assert lr_at(s, 6) == pytest.approx(1e-6, rel=1e-12)

    def test_default_lambdas(self):
        assert DEFAULT_LAMBDA["ra"] == 1e-3
        assert DEFAULT_LAMBDA["ra_transformer"] == 1e-2
        assert DEFAULT_LAMBDA["ra_unsupervised"] == 10


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"mdoe": "ra"})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"schedule": {"lr": 1e-3}})

    def test_schema_version(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"schema_version": 2})

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mode": "adversarial"})

    def test_bad_distance(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mode": "ra_unsupervised", "distance": "cosine"})

    def test_lambda_alias_and_resolution(self):
        assert ExperimentConfig.from_dict({"mode": "ra", "lambda": 0.5}).resolved_lambda() == 0.5
        assert ExperimentConfig.from_dict({"mode": "ra_transformer"}).resolved_lambda() == 1e-2

    def test_hash_ignores_output_dir(self):
        a = ExperimentConfig.from_dict({"output_dir": "x"})
        b = ExperimentConfig.from_dict({"output_dir": "y"})
        c = ExperimentConfig.from_dict({"output_dir": "x", "seeds": [1]})
        assert a.config_hash() == b.config_hash() != c.config_hash()

    def test_dump_load(self, tmp_path):
        cfg = small_config(mode="ra", lam=1e-4)
        back = ExperimentConfig.load(cfg.dump(tmp_path / "c.json"))
        assert back.to_dict() == cfg.to_dict()

    def test_load_missing(self, tmp_path):
        with pytest.raises(NotFound):
            ExperimentConfig.load(tmp_path / "none.json")

    def test_upscale_follows_task(self):
        assert ExperimentConfig.from_dict({"task": {"kind": "jpeg", "quality": 10}}).processor_spec().upscale == 1
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"task": {"kind": "jpeg", "quality": 10}, "processor": {"upscale": 4}})


def _toy_separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    images = np.where(labels[:, None, None, None] == 1, 0.8, 0.2) + rng.normal(0, 0.02, (n, 16, 16, 3))
    return Dataset(np.clip(images, 0, 1).astype(np.float32), labels.astype(np.int64), ["dark", "bright"], "train")


class TestPretrain:
    def test_toy_converges(self):
        cfg = ExperimentConfig.from_dict({"recognizer": {"width": 4, "num_classes": 2},
                                          "recognizer_schedule": {"epochs": 5, "lr": 1e-2, "batch_size": 8}})
        R = TR.pretrain_recognizer(cfg, _toy_separable(), _toy_separable(seed=1))
        assert R.metrics["clean_val_acc"] == 1.0

    def test_zero_epochs(self, tiny_train):
        cfg = small_config(recognizer_schedule={"epochs": 0})
        R = TR.pretrain_recognizer(cfg, tiny_train)
        assert R.notes["trained"] is False
        fresh = build_recognizer(R.model.spec, TR.seed_for(0, TR._STREAM_R))
        assert weights_hash(fresh) == R.weights_hash()

    def test_deterministic(self, tiny_train, tiny_val, tmp_path):
        cfg = small_config()
        a = TR.pretrain_recognizer(cfg, tiny_train, tiny_val, log_path=tmp_path / "a.jsonl")
        b = TR.pretrain_recognizer(cfg, tiny_train, tiny_val, log_path=tmp_path / "b.jsonl")
        assert a.weights_hash() == b.weights_hash()
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_class_mismatch(self, tiny_train):
        with pytest.raises(ConfigError):
            TR.pretrain_recognizer(small_config(recognizer={"num_classes": 7}), tiny_train)

    def test_config_hash_recorded(self, tiny_R):
        assert tiny_R.config_hash == small_config().config_hash()
        assert 0 <= tiny_R.metrics["clean_val_acc"] <= 1


class TestTrainProcessor:
    def test_needs_recognizer(self, noise_pairs):
        for mode in ("ra", "ra_transformer", "ra_unsupervised", "recog_only", "joint_finetune_r"):
            with pytest.raises(ConfigError):
                TR.train_processor(small_config(mode=mode), noise_pairs)

    def test_rejects_wrong_role(self, noise_pairs):
        plain = TR.train_processor(small_config(schedule={"epochs": 0}), noise_pairs)
        with pytest.raises(ConfigError):
            TR.train_processor(small_config(mode="ra"), noise_pairs, plain.processor)

    def test_lambda_zero_is_plain(self, noise_pairs, tiny_R):
        plain = TR.train_processor(small_config(mode="plain"), noise_pairs)
        ra0 = TR.train_processor(small_config(mode="ra", lam=0.0), noise_pairs, tiny_R)
        assert plain.processor.weights_bytes() == ra0.processor.weights_bytes()

    def test_lambda_nonzero_differs(self, noise_pairs, tiny_R):
        plain = TR.train_processor(small_config(mode="plain"), noise_pairs)
        ra = TR.train_processor(small_config(mode="ra", lam=1.0), noise_pairs, tiny_R)
        assert plain.processor.weights_hash() != ra.processor.weights_hash()

    def test_transformer_decouples(self, noise_pairs, tiny_R):
        plain = TR.train_processor(small_config(mode="plain"), noise_pairs)
        res = TR.train_processor(small_config(mode="ra_transformer"), noise_pairs, tiny_R, probe_steps=range(6))
        assert res.processor.weights_bytes() == plain.processor.weights_bytes()
        assert len(res.probes) == 6
        assert all(p["grad_recog_P"] == 0.0 for p in res.probes)
        assert any(p["grad_recog_T"] > 0 for p in res.probes)
        assert res.transformer.role == "T"

    def test_ra_probe_nonzero(self, noise_pairs, tiny_R):
        res = TR.train_processor(small_config(mode="ra"), noise_pairs, tiny_R, probe_steps=[3])
        assert res.probes[0]["grad_recog_P"] > 0

    def test_recognizer_frozen(self, noise_pairs, tiny_R):
        before = tiny_R.weights_hash()
        for mode in ("ra", "ra_unsupervised", "recog_only"):
            TR.train_processor(small_config(mode=mode), noise_pairs, tiny_R)
        assert tiny_R.weights_hash() == before

    def test_joint_finetune_updates_copy(self, noise_pairs, tiny_R):
        before = tiny_R.weights_hash()
        res = TR.train_processor(small_config(mode="joint_finetune_r"), noise_pairs, tiny_R)
        assert res.recognizer is not None and res.recognizer.weights_hash() != before
        assert tiny_R.weights_hash() == before

    @pytest.mark.parametrize("distance", ["l2_probs", "l2_logits", "kl"])
    def test_unsupervised_distances(self, noise_pairs, tiny_R, distance):
        res = TR.train_processor(small_config(mode="ra_unsupervised", distance=distance), noise_pairs, tiny_R)
        assert all(math.isfinite(r["l_recog"]) for r in res.log)

    def test_single_step_descent(self, noise_pairs):
        one = noise_pairs.select([0])
        cfg = small_config(processor={"base_channels": 4, "n_resblocks": 1, "image_skip": False},
                           schedule={"lr0": 1e-4, "epochs": 1, "decay_epochs": [], "batch_size": 1})
        res = TR.train_processor(cfg, one)
        P = res.processor.model.eval()
        fresh = TR.build_processor(cfg.processor_spec(), cfg.seed).eval()
        with torch.no_grad():
            x, y = TR.to_tensor(one.inputs), TR.to_tensor(one.targets)
            # Compare in train mode (batch statistics) as during the step.
            P.train(); fresh.train()
            after = torch.mean((P(x) - y) ** 2).item()
            before = torch.mean((fresh(x) - y) ** 2).item()
        assert after < before

    def test_divergence_reports_step(self, noise_pairs):
        bad = noise_pairs.select(range(16))
        bad.inputs = bad.inputs.copy()
        bad.inputs[9] = np.nan
        with pytest.raises(DivergedError) as info:
            TR.train_processor(small_config(schedule={"epochs": 1, "decay_epochs": [], "batch_size": 8}), bad)
        assert info.value.step in (0, 1)

    def test_log_rows(self, noise_pairs, tiny_R, tmp_path):
        res = TR.train_processor(small_config(mode="ra"), noise_pairs, tiny_R, log_path=tmp_path / "log.jsonl")
        rows = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert rows == json.loads(json.dumps(res.log))
        assert [r["epoch"] for r in rows] == [1, 2]
        assert rows[0]["lr"] == 1e-3 and rows[1]["lr"] == pytest.approx(1e-4)

    def test_empty_pairs(self, noise_pairs):
        with pytest.raises(ConfigError):
            TR.train_processor(small_config(), noise_pairs.select([]))


class TestProcessedRecognizer:
    def test_identity_processor_equals_pretrain(self, tiny_train, tiny_val):
        cfg = small_config()
        spec = DegradationSpec(GAUSSIAN_NOISE, sigma=0.0)
        tp, vp = make_pairs(tiny_train, spec, 0), make_pairs(tiny_val, spec, 1)
        a = TR.train_recognizer_on_processed(cfg, tp, vp, processor=None)
        b = TR.pretrain_recognizer(cfg, tiny_train, tiny_val)
        assert a.weights_hash() == b.weights_hash()
        assert a.metrics["clean_val_acc"] == a.metrics["processed_val_acc"] == b.metrics["clean_val_acc"]

    def test_metrics_bounded(self, tiny_train, tiny_val, noise_pairs):
        cfg = small_config()
        P = TR.train_processor(cfg, noise_pairs).processor
        vp = make_pairs(tiny_val, DegradationSpec.make("noise"), 1)
        R = TR.train_recognizer_on_processed(cfg, noise_pairs, vp, processor=P)
        for key in ("processed_val_acc", "clean_val_acc"):
            assert 0 <= R.metrics[key] <= 1


class TestDescent:
    MODES = ("plain", "ra", "ra_unsupervised", "ra_transformer", "recog_only", "joint_finetune_r")

    @pytest.mark.parametrize("mode", MODES)
    def test_first_epoch_lowers_objective(self, mode, noise_pairs, tiny_R):
        cfg = small_config(mode=mode, schedule={"lr0": 1e-3, "epochs": 1, "decay_epochs": [], "batch_size": 4})
        R = tiny_R if mode != "plain" else None
        wins = 0
        for seed in range(3):
            P0 = TR.build_processor(cfg.processor_spec(), seed)
            T0 = TR.build_transformer(cfg.transformer_spec(), TR.seed_for(seed, TR._STREAM_T)) \
                if mode == "ra_transformer" else None
            before = TR.evaluate_objective(cfg, noise_pairs, P0, T0, R)
            res = TR.train_processor(cfg, noise_pairs, R, seed=seed)
            after = TR.evaluate_objective(cfg, noise_pairs, res.processor, res.transformer, res.recognizer or R)
            wins += after < before
        assert wins >= 2
