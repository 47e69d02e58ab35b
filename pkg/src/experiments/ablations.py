"""
Ablation harness: query type (QP vs OTSA on crossing scenes) and fusion type
(token layouts on synchronization-critical scenes), repeated over seeds.
"""
import copy
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from ..evaluation.evaluator import DatasetEvaluator
from ..evaluation.report_builder import ReportBuilder, read_timing, write_report
from ..inference.inference import Predictor
from ..mask_head.mask_head import REGIMES
from ..models.data_models import Manifest
from ..oisa_model.oisa_model import OISAModel
from ..synth_service.dataset_synthesizer import DatasetSynthesizer
from ..training.trainer import Trainer, write_loss_curve
from ..utils.config import Config, ConfigManager
from ..utils.errors import ConfigError

KINDS = ("query", "fusion")
FUSION_LAYOUTS = ("AVI_CONCAT", "AVI", "CONCAT", "WEIGHTED_SUM", "ATTENTION")
PRESETS = {"query": "crossing", "fusion": "sync"}
# test scenes use a different seed stream from training scenes
TEST_SEED_OFFSET = 10_000


class AblationRunner:
    def __init__(self, config: Config, train_samples: int = 10, test_samples: int = 50,
                 steps: Optional[int] = None):
        self.config = config
        self.train_samples = train_samples
        self.test_samples = test_samples
        self.steps = steps if steps is not None else config.train.steps
        self.logger = logging.getLogger(__name__)

    def _data(self, kind: str, seed: int):
        synthesizer = DatasetSynthesizer(self.config.synth)
        preset = PRESETS[kind]
        train = synthesizer.synthesize(self.train_samples, seed, "train", preset)
        test = synthesizer.synthesize(self.test_samples, seed + TEST_SEED_OFFSET, "test", preset)
        return train, test

    def _train(self, config: Config, train: Manifest, seed: int, run_dir: Path) -> OISAModel:
        config.encoder.init_seed = config.lm.init_seed = seed
        model = OISAModel(config)
        history = Trainer(model, config).fit(train, self.steps, seed)
        write_loss_curve(history, run_dir / "loss_curve.csv")
        return model

    def _evaluate(self, model: OISAModel, config: Config, test: Manifest, run_dir: Path,
                  regime: str, seed: int) -> Path:
        pred_dir = Predictor(model, config).predict_manifest(test, run_dir / "predictions", regime, seed=seed)
        report = DatasetEvaluator(config.eval).evaluate_dataset(test, pred_dir)
        eval_dir = run_dir / "eval"
        write_report(report, eval_dir, timing=read_timing(pred_dir))
        self.logger.info(f"{run_dir.name}: J&F={report.overall.JF:.4f}")
        return eval_dir

    def run_query(self, seeds: Sequence[int], out_dir: Path) -> List[Path]:
        """One jointly trained model per seed, evaluated in both regimes"""
        eval_dirs = []
        for seed in seeds:
            config = copy.deepcopy(self.config)
            config.train.regime = "joint"
            config.runtime.seed = seed
            train, test = self._data("query", seed)
            seed_dir = Path(out_dir) / f"seed{seed}"
            model = self._train(config, train, seed, seed_dir)
            for regime in REGIMES:
                eval_dirs.append(self._evaluate(model, config, test, seed_dir / regime, regime, seed))
        return eval_dirs

    def run_fusion(self, seeds: Sequence[int], out_dir: Path,
                   layouts: Sequence[str] = FUSION_LAYOUTS) -> List[Path]:
        """One model per (seed, layout), evaluated with query propagation"""
        eval_dirs = []
        for seed in seeds:
            train, test = self._data("fusion", seed)
            for layout in layouts:
                config = copy.deepcopy(self.config)
                config.assembly.layout = layout
                config.runtime.seed = seed
                run_dir = Path(out_dir) / f"seed{seed}" / layout
                model = self._train(config.validate(), train, seed, run_dir)
                eval_dirs.append(self._evaluate(model, config, test, run_dir, "QP", seed))
        return eval_dirs

    def run(self, kind: str, seeds: Sequence[int], out_dir: Path) -> Path:
        """Run one ablation and write its comparison report under out_dir/report"""
        if kind not in KINDS:
            raise ConfigError(f"Unknown ablation {kind}; expected one of {KINDS}")
        out_dir = Path(out_dir)
        ConfigManager().save_config(self.config, out_dir / "resolved_config.yaml")
        eval_dirs = self.run_query(seeds, out_dir) if kind == "query" else self.run_fusion(seeds, out_dir)
        return ReportBuilder().add_runs(eval_dirs).write(out_dir / "report")

