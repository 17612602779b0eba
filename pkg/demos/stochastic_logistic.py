"""Mini-batch ARCs-LSR1 with batch growth on a logistic regression.

The batch starts at 16 samples and doubles whenever the full training loss
stalls at one of the periodic checks. Once it covers the whole set the
method is the deterministic full-batch algorithm.
"""
import numpy as np

from arclsr1.problems import logistic_regression, synth_blobs
from arclsr1.stochastic import BatchSchedule, make_trainer, run_epochs

data = synth_blobs(200, centers=((-1.0, 0.0), (1.0, 0.0)), scale=1.0, seed=0)
train = logistic_regression(data, l2=1e-2, split="train")
test = logistic_regression(data, l2=1e-2, split="test")

schedule = BatchSchedule(initial_batch=16, full_eval_period=10, stall_tolerance=1e-4,
                         max_iters_per_batch=5, seed=0)
res = run_epochs(train, make_trainer("arcs_lsr1", {"memory": 5}), schedule, 15, np.zeros(3), test)

print(f"{'epoch':>5} {'iters':>6} {'batch':>6} {'f_train':>10} {'f_test':>10} {'accuracy':>9}")
for r in res.trace:
    print(f"{r.epoch:5d} {r.iter:6d} {r.batch_size:6d} {r.f_train:10.6f} {r.f_test:10.6f} {r.accuracy:9.3f}")
stalls = [it for it, _, stalled in res.growth_checks if stalled]
print("iterations whose full-loss check stalled:", stalls)
