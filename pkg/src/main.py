import sys

from src.controllers.front_controller import main

if __name__ == "__main__":
    sys.exit(main())
