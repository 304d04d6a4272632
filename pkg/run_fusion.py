"""
Launcher for the fusion command-line interface.

    python run_fusion.py synth --preset paper --out data/paper
    python run_fusion.py acmtf --tensor data/paper/tensor.txt --matrix data/paper/matrix.txt \
        --rank 3 --groups data/paper/labels.txt --out results/acmtf
"""
import os
import sys

# Add project to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli.commands import main

if __name__ == '__main__':
    sys.exit(main())
