import sys

from limitforce.main import main

if __name__ == "__main__":
    sys.exit(main())
