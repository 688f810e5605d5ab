"""Analytical FLOPs accounting: why dropping convolutions pays.

Layer costs follow the closed forms 2*C_in*N^2*C_out*W*H (conv2d), the
3-D analogue with an extra N*T, and 2*I*O (dense).  The bundled spec
files compare this coder's two dense blocks against an illustrative
10-conv-layer silhouette model.
"""

from koopgait import flops

coder_cost = flops.model_cost(
    flops.load_layer_specs(flops.bundled_spec_path("invka_default")))
conv_cost = flops.model_cost(
    flops.load_layer_specs(flops.bundled_spec_path("gaitset_like")))

print("layer-by-layer, two dense ET blocks:")
for entry in coder_cost.entries:
    print(f"  {entry.name:14s} {entry.kind:7s} {entry.flops:>14,}")
print(f"  total {coder_cost.total:>31,}  (= {coder_cost.total/1e9:.4f} GFLOPs)")

print("\nillustrative 10-layer convolutional model:")
for entry in conv_cost.entries[:3]:
    print(f"  {entry.name:14s} {entry.kind:7s} {entry.flops:>14,}")
print(f"  ... total {conv_cost.total:>27,}  (= {conv_cost.total/1e9:.2f} GFLOPs)")

ratio = flops.fc_conv_ratio(i=2816, o=2816, c_in=64, c_out=128, n=3,
                            w_post=16, h_post=11)
print(f"\none dense layer vs one post-pooling conv layer: {ratio:.3f} < 1")

print("\nFL Score (10^8 / FLOPs), higher is lighter:")
for name, report in (("coupling coder", coder_cost), ("conv model", conv_cost)):
    print(f"  {name:15s} {report.score:10.3g}")
print(f"  cost ratio {conv_cost.total / coder_cost.total:,.0f}x")

print("\nstacked-bar rows (label, dense, conv):")
for row in flops.stacked_rows({"coder": coder_cost, "conv": conv_cost}):
    print("  ", row)
