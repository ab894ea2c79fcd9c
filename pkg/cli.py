# ===================================================================================================
# CLI
# ===================================================================================================

import os

from decouple import config

from rskit.cli import main

# relative --data / --out paths resolve against the project directory when one is configured
os.chdir(config("DIR_PROJECT", default=os.getcwd(), cast=str))

if __name__ == "__main__":
    main()
