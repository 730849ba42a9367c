"""
Configuration module for the HyPeR off-policy learning toolkit

Centralizes all environment variable loading and provides
default values for every experiment knob the library and the
sweep harness read.
"""

import os
from pathlib import Path
from typing import Optional

# Try to load environment variables from .env file
try:
    from dotenv import load_dotenv
    # Load .env from project root
    env_path = Path(__file__).parent / '.env'
    if env_path.exists():
        load_dotenv(env_path)
except ImportError:
    pass  # dotenv not installed, will use system environment variables


def _float_list(raw: str) -> list[float]:
    return [float(item) for item in raw.split(",") if item.strip()]


class Config:
    """Central configuration class for all environment variables"""

    # Nuisance regression
    RIDGE_LAMBDA: float = float(os.getenv("HYPER_RIDGE_LAMBDA", "1e-3"))
    OBS_PROB_CLIP_LOW: float = float(os.getenv("HYPER_OBS_PROB_CLIP_LOW", "0.01"))
    OBS_PROB_CLIP_HIGH: float = float(os.getenv("HYPER_OBS_PROB_CLIP_HIGH", "0.99"))
    LOGISTIC_MAX_ITER: int = int(os.getenv("HYPER_LOGISTIC_MAX_ITER", "100"))
    LOGISTIC_TOL: float = float(os.getenv("HYPER_LOGISTIC_TOL", "1e-8"))

    # Policy training
    STEP_SIZE: float = float(os.getenv("HYPER_STEP_SIZE", "0.05"))
    ITERATIONS: int = int(os.getenv("HYPER_ITERATIONS", "300"))

    # Surrogate aggregator noise (never stated by the source experiments)
    SIGMA_F: float = float(os.getenv("HYPER_SIGMA_F", "0.3"))

    # Gamma tuning
    GAMMA_GRID: list[float] = _float_list(
        os.getenv("HYPER_GAMMA_GRID", "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    )
    SPLIT_RATIO: float = float(os.getenv("HYPER_SPLIT_RATIO", "0.7"))
    N_BOOT: int = int(os.getenv("HYPER_N_BOOT", "5"))

    # Evaluation
    N_EVAL_CONTEXTS: int = int(os.getenv("HYPER_N_EVAL_CONTEXTS", "10000"))
    N_BOOT_CI: int = int(os.getenv("HYPER_N_BOOT_CI", "1000"))

    # Observation-noise experiment
    NOISY_OBS_CLIP_LOW: float = float(os.getenv("HYPER_NOISY_OBS_CLIP_LOW", "0.05"))
    NOISY_OBS_CLIP_HIGH: float = float(os.getenv("HYPER_NOISY_OBS_CLIP_HIGH", "0.95"))
    THETA_O_SCALE: float = float(os.getenv("HYPER_THETA_O_SCALE", "0.5"))

    # Execution
    N_JOBS: int = int(os.getenv("HYPER_N_JOBS", "1"))
    FIXTURE_DIR: str = os.getenv(
        "HYPER_FIXTURE_DIR", str(Path(__file__).parent / "data" / "kuairec_mini")
    )

    # Langfuse Configuration (optional run tracing)
    LANGFUSE_PUBLIC_KEY: Optional[str] = os.getenv("LANGFUSE_PUBLIC_KEY")
    LANGFUSE_SECRET_KEY: Optional[str] = os.getenv("LANGFUSE_SECRET_KEY")
    LANGFUSE_HOST: str = os.getenv("LANGFUSE_HOST", "https://cloud.langfuse.com")

    @classmethod
    def get_experiment_run_name(cls, experiment_type: str, axis: Optional[str] = None) -> str:
        """
        Generate a clear, readable name for experiment runs

        Args:
            experiment_type: Type of run (sweep, tune, ...)
            axis: Optional name of the swept parameter

        Returns:
            Formatted run name with timestamp and context
        """
        from datetime import datetime
        import socket

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")

        # Get current user or hostname for context
        try:
            context = os.getenv("USER", socket.gethostname().split('.')[0])
        except OSError:
            context = "unknown"

        base_name = f"HyPeR_{experiment_type}_{timestamp}_{context}"

        if axis:
            clean_axis = axis.replace("-", "_").rstrip("_")
            base_name = f"HyPeR_{experiment_type}_{clean_axis}_{timestamp}_{context}"

        return base_name

    @classmethod
    def validate_required(cls, required_vars: list[str]) -> list[str]:
        """
        Validate that required environment variables are set

        Args:
            required_vars: List of required variable names

        Returns:
            List of missing variable names
        """
        missing = []
        for var in required_vars:
            if not getattr(cls, var, None):
                missing.append(var)
        return missing

    @classmethod
    def get_all(cls) -> dict:
        """Get all non-secret configuration values as a dictionary"""
        return {
            key: value
            for key, value in vars(cls).items()
            if key.isupper() and not key.endswith("_KEY")
        }


# Create a singleton instance for easy access
config = Config()
