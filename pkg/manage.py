#!/usr/bin/env python
"""Command-line utility for the partialgait toolkit."""
import os
import sys

# Apps live under reid/
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.append(os.path.join(project_root, 'reid'))


def main():
    """Run a toolkit subcommand."""
    from partialgait.cli import run

    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
