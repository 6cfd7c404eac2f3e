"""SMML with the quotient search, and the conditional that breaks zero excess."""

import math

from consistency_lab.smml import CodebookAssignment, enumerate_support, excess_length_I2, smml_search
from consistency_lab.zoo import SmmlCounterexample

sm = SmmlCounterexample()
for n in (3, 4):
    res = smml_search(sm, n, quotient=True)
    used = sorted({str(sm.param(k)) for cb in res.assignments for k in cb.used()})
    print(f"n={n}: optimal excess {res.optimum:.3g} nats, estimates used {used}")

n = 4
t = enumerate_support(sm, n)
two, five = sm.index_of(2), sm.index_of(5)
cb = CodebookAssignment.from_function(t, lambda x: two if sm.log_likelihood(two, x) > -math.inf else five)
q = cb.induced(t)[two]
cond = float(t.r[t.index()[(2, 2, 1, 1)]]) / q
print(f"assign 2 where it is feasible: P(2,2,1,1 | estimate 2) = {cond:.4f}, "
      f"likelihood under 2 = {math.exp(sm.log_likelihood(two, (2, 2, 1, 1))):.4f}")
print(f"excess length of that codebook: {excess_length_I2(sm, cb, table=t).I2:.4f} nats")
