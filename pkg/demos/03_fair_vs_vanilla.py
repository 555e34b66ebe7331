"""Train the unmitigated baseline and the fair model on the same data.

The generator plants the group signal both directly in the label and
through two proxy features, so the baseline happily learns it. The fair
model reconstructs the group from the proxies, routes interactions
through that reconstruction, and pays a small accuracy price to close
most of both fairness gaps.
"""

from dataclasses import replace

from fairint.data import split, synth_generate
from fairint.model import ModelConfig
from fairint.training import TrainConfig, evaluate_model, train

dataset = split(synth_generate(n=20000, bias_strength=2.0, proxy_corr=0.8, seed=1),
                (0.7, 0.15, 0.15), seed=1)

recipe = TrainConfig(learning_rate=3e-3, batch_size=128, max_epochs=60, patience=60,
                     dropout=0.1, l2=1e-4, seed=0)


def show(name, config):
    model, history = train(dataset, ModelConfig(), config)
    report = evaluate_model(model, dataset, "test")
    sar = "   -" if report.sar_accuracy is None else f"{report.sar_accuracy:.3f}"
    print(f"  {name:16s} auc {report.auc:.4f}   ddp {report.ddp:.4f}   "
          f"deo {report.deo:.4f}   sar acc {sar}   best epoch {history.best_epoch}")
    return report


print("test-split metrics (ddp and deo: lower is fairer)")
vanilla = show("vanilla mlp", replace(recipe, enable_bid=False))
plain = show("fairint, no fc", recipe)
tuned = show("fairint, tuned", replace(recipe, lambda_ifc=2.0, lambda_fc=30.0))

print()
print(f"demographic parity gap: {vanilla.ddp:.3f} -> {tuned.ddp:.3f} "
      f"({100 * (1 - tuned.ddp / vanilla.ddp):.0f}% lower)")
print(f"equalized odds gap:     {vanilla.deo:.3f} -> {tuned.deo:.3f} "
      f"({100 * (1 - tuned.deo / vanilla.deo):.0f}% lower)")
print(f"auc cost:               {vanilla.auc:.3f} -> {tuned.auc:.3f} "
      f"({vanilla.auc - tuned.auc:+.3f})")
