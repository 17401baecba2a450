"""
Configuration loading and validation.
"""

import math

import yaml
from pathlib import Path
from typing import Any, Dict

from hyperlap.control import OptimizerOptions
from hyperlap.prox import ProxOptions
from hyperlap.spectral import EigenOptions

FLOAT_FIELDS = (
    "newton_tol",
    "prox_q_start",
    "prox_q_max",
    "prox_stage_tol",
    "eigen_tol",
    "opt_step0",
    "opt_backtrack",
    "opt_armijo",
    "opt_tol",
)
INT_FIELDS = ("eigen_restarts", "eigen_iters", "opt_max_iters", "verify_samples")


def _as_number(name: str, value: Any, kind):
    # YAML 1.1 reads "1e-10" (no dot) as a string
    if isinstance(value, bool):
        raise ValueError(f"{name} must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {value!r}")
    if kind is int:
        if not math.isfinite(number) or number != int(number):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        return int(number)
    return number


class Config:
    """Run configuration: solver tolerances, seeds and report switches."""

    def __init__(self):
        # Output
        self.out_dir: str = "output_hyperlap"
        self.seed: int = 0

        # Newton / prox solvers
        self.newton_tol: float = 1e-10
        self.prox_q_start: float = 4.0
        self.prox_q_max: float = 512.0
        self.prox_stage_tol: float = 1e-8
        self.prox_polish: bool = True

        # Eigenvalue search
        self.eigen_restarts: int = 16
        self.eigen_iters: int = 5000
        self.eigen_tol: float = 1e-8

        # Projected-gradient optimizer
        self.opt_max_iters: int = 200
        self.opt_step0: float = 1.0
        self.opt_backtrack: float = 0.5
        self.opt_armijo: float = 1e-4
        self.opt_tol: float = 1e-6

        # verify
        self.verify_samples: int = 20

        # Report generation flags
        self.reports_xlsx: bool = True

    def load_from_file(self, config_path: str) -> None:
        """Load configuration from YAML file."""
        config_file = Path(config_path)

        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_file, "r", encoding="utf-8") as f:
            try:
                config_data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ValueError(f"Invalid YAML in {config_path}: {e}")

        if config_data is not None and not isinstance(config_data, dict):
            raise ValueError(f"{config_path} must contain a YAML mapping")
        self.load_from_dict(config_data)

    def load_from_dict(self, config_data: Dict[str, Any]) -> None:
        """Load configuration from dictionary."""
        if not config_data:
            return

        if "out_dir" in config_data:
            self.out_dir = config_data["out_dir"]
        if "seed" in config_data:
            self.seed = config_data["seed"]
        if "newton_tol" in config_data:
            self.newton_tol = config_data["newton_tol"]

        prox = config_data.get("prox") or {}
        if "q_start" in prox:
            self.prox_q_start = prox["q_start"]
        if "q_max" in prox:
            self.prox_q_max = prox["q_max"]
        if "stage_tol" in prox:
            self.prox_stage_tol = prox["stage_tol"]
        if "polish" in prox:
            self.prox_polish = prox["polish"]

        eigen = config_data.get("eigen") or {}
        if "restarts" in eigen:
            self.eigen_restarts = eigen["restarts"]
        if "iters" in eigen:
            self.eigen_iters = eigen["iters"]
        if "tol" in eigen:
            self.eigen_tol = eigen["tol"]

        optimizer = config_data.get("optimizer") or {}
        if "max_iters" in optimizer:
            self.opt_max_iters = optimizer["max_iters"]
        if "step0" in optimizer:
            self.opt_step0 = optimizer["step0"]
        if "backtrack" in optimizer:
            self.opt_backtrack = optimizer["backtrack"]
        if "armijo" in optimizer:
            self.opt_armijo = optimizer["armijo"]
        if "tol" in optimizer:
            self.opt_tol = optimizer["tol"]

        verify = config_data.get("verify") or {}
        if "samples" in verify:
            self.verify_samples = verify["samples"]

        # Report generation flags
        if "reports" in config_data:
            reports = config_data["reports"] or {}
            if "xlsx" in reports:
                self.reports_xlsx = reports["xlsx"]

    def merge_args(self, args: Any) -> None:
        """Merge command-line arguments, overriding config file values."""
        if getattr(args, "out_dir", None):
            self.out_dir = args.out_dir
        if getattr(args, "seed", None) is not None:
            self.seed = args.seed
        if getattr(args, "tol", None) is not None:
            self.opt_tol = args.tol
        if getattr(args, "samples", None) is not None:
            self.verify_samples = args.samples
        if getattr(args, "restarts", None) is not None:
            self.eigen_restarts = args.restarts

    def validate(self) -> None:
        """Validate configuration settings."""
        if not self.out_dir:
            raise ValueError("Output directory must be specified")

        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

        for name in FLOAT_FIELDS:
            setattr(self, name, _as_number(name, getattr(self, name), float))
        for name in INT_FIELDS:
            setattr(self, name, _as_number(name, getattr(self, name), int))

        for name in ("newton_tol", "prox_stage_tol", "eigen_tol", "opt_tol", "opt_step0", "opt_armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

        if self.prox_q_start < 2 or self.prox_q_max < self.prox_q_start:
            raise ValueError("prox.q_start must be >= 2 and prox.q_max >= prox.q_start")

        if not 0 < self.opt_backtrack < 1:
            raise ValueError("optimizer.backtrack must lie in (0, 1)")

        for name in INT_FIELDS:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    # -----------------------------
    # Solver option objects
    # -----------------------------
    def prox_options(self) -> ProxOptions:
        return ProxOptions(
            q_start=float(self.prox_q_start),
            q_max=float(self.prox_q_max),
            stage_tol=float(self.prox_stage_tol),
            newton_tol=float(self.newton_tol),
            polish=bool(self.prox_polish),
        )

    def eigen_options(self) -> EigenOptions:
        return EigenOptions(
            restarts=int(self.eigen_restarts),
            iters=int(self.eigen_iters),
            tol=float(self.eigen_tol),
            seed=int(self.seed),
        )

    def optimizer_options(self) -> OptimizerOptions:
        return OptimizerOptions(
            max_iters=int(self.opt_max_iters),
            step0=float(self.opt_step0),
            backtrack=float(self.opt_backtrack),
            armijo=float(self.opt_armijo),
            tol=float(self.opt_tol),
        )

    def __repr__(self) -> str:
        """String representation of configuration."""
        return (
            f"Config(\n"
            f"  out_dir='{self.out_dir}',\n"
            f"  seed={self.seed},\n"
            f"  newton_tol={self.newton_tol},\n"
            f"  prox=(q_start={self.prox_q_start}, q_max={self.prox_q_max}, "
            f"stage_tol={self.prox_stage_tol}, polish={self.prox_polish}),\n"
            f"  eigen=(restarts={self.eigen_restarts}, iters={self.eigen_iters}, tol={self.eigen_tol}),\n"
            f"  optimizer=(max_iters={self.opt_max_iters}, step0={self.opt_step0}, "
            f"backtrack={self.opt_backtrack}, armijo={self.opt_armijo}, tol={self.opt_tol}),\n"
            f"  verify=(samples={self.verify_samples}),\n"
            f"  reports=(xlsx={self.reports_xlsx})\n"
            f")"
        )
