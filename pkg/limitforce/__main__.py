import sys

from limitforce.main import main

sys.exit(main())
