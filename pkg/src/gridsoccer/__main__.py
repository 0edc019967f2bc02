import sys

from gridsoccer.harness.cli import main

sys.exit(main())
