import sys

from fpjpa.cli import main

sys.exit(main())
