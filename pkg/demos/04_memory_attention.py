"""Poke at the memory-conditioned attention block: uniform first-pass
weights on an empty bank, the FIFO update, the two-pass training forward,
and the buffer staying outside the gradient graph.
"""

import numpy as np

from memformer import autodiff as ad
from memformer.attention import (
    AttentionWeights,
    MemoryAttention,
    MemoryBuffer,
    attend,
    project_memory,
    update_memory,
)

rng = np.random.default_rng(9)

print("== a fresh buffer attends uniformly ==")
buffer = MemoryBuffer(capacity=4, width=8)
weights = AttentionWeights(8, 2, rng)
q = ad.matmul(ad.constant(rng.standard_normal((1, 3, 8))), weights.w_q)
k_mem, v_mem = project_memory(buffer, weights, batch=1)
out, attn_weights = attend(q, k_mem, v_mem, 2, return_weights=True)
print(f"every weight equals 1/capacity = {1 / 4}: {bool(np.allclose(attn_weights.data, 0.25))}")
print(f"and the output is all zeros: {bool(np.all(out.data == 0.0))}")

print("\n== FIFO update ==")
for step in range(3):
    response = ad.constant(rng.standard_normal((2, 3, 8)))
    update_memory(buffer, response)
    filled = int((np.abs(buffer.entries).sum(axis=1) > 0).sum())
    print(f"after update {step + 1}: {filled} of 4 rows filled, newest at the end")
oldest_before = buffer.entries[1].copy()
update_memory(buffer, ad.constant(rng.standard_normal((2, 3, 8))))
print(f"rows shift by one: {bool(np.array_equal(buffer.entries[0], oldest_before))}")

print("\n== two-pass training forward ==")
block = MemoryAttention(8, 2, 4, rng, dropout_rate=0.0)
block.buffer.entries = rng.standard_normal((4, 8))
z = ad.constant(rng.standard_normal((2, 3, 8)))
bank_before = block.buffer.entries.copy()
out_train = block.forward(z, train=True)
print(f"training forward updated the bank: {not np.array_equal(block.buffer.entries, bank_before)}")
frozen = block.buffer.entries.copy()
out_eval = block.forward(z, train=False)
print(f"eval forward left it alone: {bool(np.array_equal(block.buffer.entries, frozen))}")

print("\n== the bank never receives gradients ==")
loss = ad.tensor_sum(block.forward(z, train=False))
loss.backward()
has_grads = all(p.grad is not None for p in block.parameters('blk').values())
print(f"all block parameters got gradients: {has_grads}")
print(f"bank is a plain array, not a graph node: {not isinstance(block.buffer.entries, ad.Tensor)}")
