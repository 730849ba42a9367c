"""
HyPeR off-policy learning toolkit

Policy-gradient estimators for contextual bandits with partially observed
target rewards and densely observed secondary rewards.
"""

import sys
from pathlib import Path

# Add the project root so the shared config module is importable
sys.path.insert(0, str(Path(__file__).parent.parent))

__version__ = "0.1.0"
