"""
Console entry for the hard-edge toolkit.

    python main.py verify --suite psi --r 1,2 --alpha 0.31
"""

from hard_edge.cli import main

if __name__ == "__main__":
    main()
