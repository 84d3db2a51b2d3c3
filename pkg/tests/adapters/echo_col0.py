import sys

out = sys.stdout
for line in sys.stdin:
    _, _, n, _ = line.split()
    for _ in range(int(n)):
        out.write(sys.stdin.readline().split(",")[0].strip() + "\n")
    out.flush()
