"""
Simple runner script for Reuse-IGA
Run this from the repository root: python run.py verify
"""
import sys
from pathlib import Path

# Add the repository root to Python path
sys.path.insert(0, str(Path(__file__).parent))

if __name__ == "__main__":
    from src.app.main import main
    sys.exit(main())
