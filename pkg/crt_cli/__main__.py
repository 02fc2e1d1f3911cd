import sys

from crt_cli.commands import run

if __name__ == "__main__":
    sys.exit(run())
