import sys

from EchoMapRunner import main

if __name__ == '__main__':
    exit(main(sys.argv[1:]))
