"""A tour of the mixer blocks: shapes, structure and gradient checks."""

import numpy as np

from mixmas.gradcheck import grad_check, projected
from mixmas.tensor import Tensor
from mixmas.zoo import HyperMixerBlock, MixerBlock, MonarchLinear, MonarchMixerBlock

rng = np.random.default_rng(0)
x = rng.standard_normal((6, 8))

for blk in (MixerBlock(6, 8, 12, 16, rng), HyperMixerBlock(8, 12, 16, rng),
            MonarchMixerBlock(6, 8, rng)):
    params = blk.num_parameters()
    print(f"{type(blk).__name__:<18} out {blk(Tensor(x)).data.shape}  params {params}")

# Monarch as a dense matrix: push the identity through it.
layer = MonarchLinear(16, rng, blocks=4)
dense = layer(Tensor(np.eye(16))).data.T
print(f"\nmonarch 16x16: {layer.left.data.size + layer.right.data.size} params, "
      f"dense equivalent has {dense.size}")

# The hypermixer is equivariant to token order and takes any token count.
hyper = HyperMixerBlock(8, 12, 16, rng)
perm = rng.permutation(6)
gap = np.abs(hyper(Tensor(x[perm])).data - hyper(Tensor(x)).data[perm]).max()
print(f"hypermixer permutation gap {gap:.1e}; 3 tokens -> {hyper(Tensor(x[:3])).data.shape}")

# Gradient check against central differences.
xt = Tensor(x)
f = projected(lambda: hyper(xt), rng)
print(f"hypermixer grad check rel err {grad_check(f, [xt, *hyper.parameters().values()], h=1e-6):.1e}")
