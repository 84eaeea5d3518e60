"""Train the SFT and GRPO arms briefly on a small cipher and compare.

Takes about a minute on one core.
Run:  python3 demos/sft_vs_grpo.py
"""

from textgrpo.grpo import TrainConfig, grpo_train
from textgrpo.sft import SftConfig, sft_train
from textgrpo.tasks import gen_cipher

split = gen_cipher(0, size=1000, vocab_size=30)

progress = lambda arm: lambda step, scores, _: print(f"  {arm:5s} step {step:5d}  val BLEU x100 {100 * scores['BLEU']:6.2f}")

print("SFT: teacher-forced NLL of the reference")
sft = sft_train(split, SftConfig(epochs=5, lr=1e-2, max_grad_norm=1.0, hidden=32, eval_limit=100), on_validation=progress("SFT"))

print("GRPO: 8 samples per prompt, BLEU reward, KL to the initial policy")
grpo = grpo_train(split, TrainConfig(epochs=5, lr=1e-2, max_grad_norm=1.0, hidden=32, max_completion_len=20, eval_limit=100),
                  on_validation=progress("GRPO"))

rewards = grpo.log.series("mean_reward")
k = len(rewards) // 5
print(f"GRPO mean training reward, first fifth {sum(rewards[:k]) / k:.3f} -> last fifth {sum(rewards[-k:]) / k:.3f}")
print(f"best validation BLEU x100: SFT {100 * sft.best_score:.2f}, GRPO {100 * grpo.best_score:.2f}")
