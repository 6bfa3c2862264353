"""
Picking a timestamp
===================

A client collects clock readings from at least n - f servers and takes the
(f+1)-st largest over all n slots, counting missing answers as 0, plus one.
At least one correct server reported a value that high, so a Byzantine server
cannot push the timestamp forward and leave a gap.
"""
from byblos.client import choose_timestamp

n, f = 5, 1

print(choose_timestamp({"s1": 3, "s2": 3, "s3": 2, "s4": 3}, n, f))   # 4
# a Byzantine server reporting a huge clock is ignored
print(choose_timestamp({"s1": 3, "s2": 3, "s3": 2, "s4": 10**6}, n, f))  # 4
# a missing answer counts as zero
print(choose_timestamp({"s1": 0, "s2": 0, "s3": 0, "s4": 0}, n, f))   # 1
