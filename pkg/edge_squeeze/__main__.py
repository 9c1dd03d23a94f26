"""Run the command line with python -m edge_squeeze."""
from edge_squeeze.cli import run

if __name__ == "__main__":
    run()
