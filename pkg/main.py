"""
main.py
- command-line entry: python main.py <command> [options]
- see motzkin_tn/cli.py for the commands
"""

from motzkin_tn.cli import main

if __name__ == "__main__":
    main()
