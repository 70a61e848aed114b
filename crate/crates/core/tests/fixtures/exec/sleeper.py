import time

print("OBJECTIVE_VALUE: 1.0", flush=True)
while True:
    time.sleep(0.05)
