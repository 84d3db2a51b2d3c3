import sys

for line in sys.stdin:
    n = int(line.split()[2])
    for i in range(n):
        sys.stdin.readline()
    for i in range(max(0, n - 1)):
        sys.stdout.write("1\n")
    sys.stdout.flush()
    sys.stdin.close()
    break
