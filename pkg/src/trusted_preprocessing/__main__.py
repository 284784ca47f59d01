"""
Entry point for running the workflows as a module.
Allows execution with: python -m trusted_preprocessing
"""

import sys

from trusted_preprocessing.main import main

if __name__ == "__main__":
    sys.exit(main())
