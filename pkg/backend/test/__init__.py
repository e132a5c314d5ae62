import os
import sys

# Tests run from backend/ and import the echomap package from src/.
sys.path.append(os.path.join(os.getcwd(), "src"))
