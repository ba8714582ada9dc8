"""
RunController: wires loaders, configuration, the engine, the trainer and
the result writers together for each command-line subcommand.

  gen-sbm   spec JSON      → graph directory (+ noisy.tsv)
  train     graph + config → params.bin, history.csv, refinement.jsonl, summary.json
  refine    graph + config → refined graph directory after one DR + TR pass
  stability graph + params → stability.json / stability.csv
  ablate    spec + config  → ablation.json / ablation.csv
  linkpred  graph + config → linkpred.json / linkpred.csv
  scale     config         → scaling.json / scaling.csv
  noise     spec + config  → noise.json / noise.csv

Every command writes only into its output directory and returns the path
of its main artifact.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from bench.experiments import (
    ablation_experiment,
    convergence_trend,
    degree_and_timing_report,
    noise_attenuation_experiment,
    scaling_sweep,
    stability_experiment,
)
from bench.linkpred import link_prediction_eval
from bench.results import ExperimentResult, to_jsonable
from bench.sbm import SbmSpec, gen_sbm
from diffusion.checkpoint import load_params, save_params
from diffusion.config import Mode, ScheduleConfig
from diffusion.params import SimilarityWeights, init_params
from graph.io import load_graph_dir, save_graph_dir
from graph.shells import build_hop_shells
from graph.store import apply_topology_delta
from refinement.distance import prune_shells
from refinement.report import RefinementReport, write_reports
from refinement.topology import knn_candidates, score_and_add
from training.trainer import fit

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class RunController:
    """Executes one subcommand per call; holds only the optional config path."""

    def __init__(self, config_path: Optional[PathLike] = None, progress: bool = False):
        self.cfg = ScheduleConfig.from_json(config_path) if config_path else ScheduleConfig()
        self.progress = progress

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _seeds(self, count: int) -> list[int]:
        return [self.cfg.seed + i for i in range(count)]

    @staticmethod
    def _out_dir(out: PathLike) -> Path:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def _write_result(out: Path, stem: str, result: ExperimentResult) -> Path:
        result.write_json(out / f"{stem}.json")
        result.write_csv(out / f"{stem}.csv")
        logger.info("[Run] wrote %s", out / f"{stem}.json")
        return out / f"{stem}.json"

    # ------------------------------------------------------------------
    # Subcommands
    # ------------------------------------------------------------------

    def gen_sbm(self, spec_path: PathLike, out: PathLike) -> Path:
        spec = SbmSpec.from_json(spec_path)
        g, noisy = gen_sbm(spec)
        return save_graph_dir(out, g, noisy)

    def train(self, graph_dir: PathLike, out: PathLike, mode: Optional[str] = None) -> Path:
        g = load_graph_dir(graph_dir)
        cfg = self.cfg.with_overrides(mode=Mode.parse(mode)) if mode else self.cfg
        result = fit(g, cfg, progress=self.progress)

        out_dir = self._out_dir(out)
        save_params(out_dir / "params.bin", result.params, result.weights)
        result.write_history(out_dir / "history.csv")
        write_reports(out_dir / "refinement.jsonl", result.reports)
        cfg.save_json(out_dir / "config.json")
        save_graph_dir(out_dir / "graph", result.graph)

        degree = degree_and_timing_report(result)
        norms = [row["grad_norm"] for row in result.history]
        summary = {
            "mode": cfg.mode.value,
            "epochs": result.epochs_run,
            "best_epoch": result.state.best_epoch,
            "stopped_early": result.stopped_early,
            "val_acc": result.val_acc,
            "test_acc": result.test_acc,
            "edges_start": g.edge_count,
            "edges_end": result.graph.edge_count,
            "d_eff_first_ratio": degree.extra["first_ratio"],
            "convergence": convergence_trend(norms) if len(norms) >= 2 else None,
            "omega": result.weights.as_array().tolist(),
        }
        (out_dir / "summary.json").write_text(
            json.dumps(to_jsonable(summary), indent=2) + "\n",
            encoding="utf-8",
        )
        logger.info("[Run] trained %s: test_acc=%.4f", cfg.mode.value, result.test_acc)
        return out_dir / "summary.json"

    def refine(self, graph_dir: PathLike, out: PathLike) -> Path:
        """One distance-pruning and reconstruction pass with no training."""
        cfg = self.cfg
        g = load_graph_dir(graph_dir)
        shells = build_hop_shells(g, cfg.K, cfg.shell_cap, cfg.seed)
        report = RefinementReport(
            epoch=0, d_original=shells.original_degree(), d_eff_before=shells.effective_degree()
        )
        frag = prune_shells(g, shells, cfg)
        report.add_prune(frag)
        cands = knn_candidates(g, cfg.knn_k, cfg.max_added_per_node_R, cfg.knn_backend, cfg.seed)
        added = score_and_add(g, cands, SimilarityWeights(*cfg.omega_init), cfg, rng_seed=cfg.seed)
        report.add_additions(added)
        new_g, new_shells = apply_topology_delta(g, added.added, shells, pruned=frag.pruned)
        report.d_eff_after = new_shells.effective_degree()

        out_dir = save_graph_dir(out, new_g)
        write_reports(out_dir / "refinement.jsonl", [report])
        summary = {
            "pruned": len(report.pruned),
            "added": len(report.added),
            "d_original": report.d_original,
            "d_eff": report.d_eff_after,
            "edges_start": g.edge_count,
            "edges_end": new_g.edge_count,
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        logger.info("[Run] refined: %d pruned, %d added", summary["pruned"], summary["added"])
        return out_dir / "summary.json"

    def stability(
        self,
        graph_dir: PathLike,
        out: PathLike,
        deltas: Sequence[int],
        seed_count: int,
        params_path: Optional[PathLike] = None,
    ) -> Path:
        g = load_graph_dir(graph_dir)
        cfg = self.cfg
        if params_path:
            params, _ = load_params(params_path)
            cfg = cfg.with_overrides(K=params.K, hidden_dim=params.hidden_dim)
        else:
            params = init_params(cfg.K, g.feature_dim, cfg.hidden_dim, max(1, g.class_count), cfg.seed)
        result = stability_experiment(g, cfg, list(deltas), self._seeds(seed_count), params)
        return self._write_result(self._out_dir(out), "stability", result)

    def ablate(self, spec_path: PathLike, out: PathLike, seed_count: int) -> Path:
        spec = SbmSpec.from_json(spec_path)
        result = ablation_experiment(spec, self.cfg, self._seeds(seed_count), progress=self.progress)
        return self._write_result(self._out_dir(out), "ablation", result)

    def linkpred(
        self,
        graph_dir: PathLike,
        out: PathLike,
        holdout: float,
        seed_count: int,
        mode: Optional[str] = None,
        scorer: str = "dot",
    ) -> Path:
        g = load_graph_dir(graph_dir)
        result = link_prediction_eval(
            g, self.cfg, holdout, self._seeds(seed_count), mode=mode, scorer=scorer,
            progress=self.progress,
        )
        return self._write_result(self._out_dir(out), "linkpred", result)

    def scale(
        self, out: PathLike, sizes: Sequence[int], avg_degree: float, seed_count: int, epochs: int
    ) -> Path:
        result = scaling_sweep(sizes, avg_degree, self.cfg, self._seeds(seed_count), epochs=epochs)
        return self._write_result(self._out_dir(out), "scaling", result)

    def noise(self, spec_path: PathLike, out: PathLike, seed_count: int) -> Path:
        spec = SbmSpec.from_json(spec_path)
        result = noise_attenuation_experiment(spec, self.cfg, self._seeds(seed_count))
        ratio = result.extra["rate_ratio"]
        if np.isfinite(ratio):
            logger.info("[Run] pruned-noisy rate is %.2fx the base rate", ratio)
        return self._write_result(self._out_dir(out), "noise", result)
