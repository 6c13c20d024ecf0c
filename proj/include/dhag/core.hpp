#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dhag/model.hpp"
#include "dhag/rng.hpp"

namespace dhag {

// One training step's worth of perturbations: per perturbator, an [m x pdim]
// tensor of perturbations, their detached norms, and the norm-rank pseudo
// labels (0 = augmented normal, 1 = synthetic anomaly).
struct PerturbationBatch {
    std::vector<Tensor> eps;
    std::vector<std::vector<double>> norms;
    std::vector<std::vector<int>> pseudo_labels;

    std::size_t num_perturbators() const { return eps.size(); }
    std::size_t batch_size() const { return eps.empty() ? 0 : eps.front().rows(); }
};

// One standard-normal scalar per row per perturbator call.
std::vector<Tensor> sample_noise(std::size_t m, std::size_t count, Rng& rng);

// Run every perturbator on x with its noise column attached.
std::vector<Tensor> perturb_forward(const DhagModel& model, const Tensor& x,
                                    const std::vector<Tensor>& noise);

std::vector<Tensor> generate_perturbations(const DhagModel& model, const Tensor& x, Rng& rng);

// Rank-by-norm labeling: the K smallest norms get label 0, the rest 1.
// Ties break by ascending batch index (stable sort).
std::vector<int> assign_pseudo_labels(std::span<const double> norms, std::size_t k);

// Label a generated set. K is clipped to the batch size.
PerturbationBatch label_perturbations(std::vector<Tensor> eps, std::size_t k);

// Rebuild a batch around externally fixed labels (gradient-check path, where
// the ranking must be held constant while parameters move).
PerturbationBatch make_batch_with_labels(std::vector<Tensor> eps,
                                         std::vector<std::vector<int>> labels);

PerturbationBatch generate_and_label(const DhagModel& model, const Tensor& x, std::size_t k,
                                     Rng& rng);

// Mean over samples of: CE(clean, 0) + (1/L) sum_l CE(perturbed_l, label_l).
// In latent mode the perturbation is added to the encoding; in feature mode it
// is added to the input before encoding. With adversarial=true the gradient of
// this loss is reversed on its way into the perturbators (the norm/diversity
// gradients are unaffected).
Tensor loss_ce(const DhagModel& model, const Tensor& x, const PerturbationBatch& batch,
               bool adversarial = false);

// Mean perturbation magnitude: (1/m) sum_i (1/L) sum_l ||eps_l_i||.
Tensor loss_norm(const std::vector<Tensor>& eps);

// Mean pairwise cosine similarity over ordered perturbator pairs:
// (1/m) sum_i (1/(L(L-1))) sum_{l != k} sim(eps_l_i, eps_k_i).
// Returns 0 with a warning when L == 1.
Tensor loss_div(const std::vector<Tensor>& eps);

// Mean CE of known anomalies against label 1.
Tensor semi_sup_loss(const DhagModel& model, const Tensor& x_anom);

struct LossReport {
    double ce = 0.0;
    double norm = 0.0;
    double div = 0.0;
    double aug = 0.0;
    double total = 0.0;
};

struct LossTerms {
    Tensor ce;
    Tensor norm;
    Tensor div;
    Tensor aug;    // undefined tensor when not in the semi-supervised path
    Tensor total;  // single backward root

    LossReport report() const;
};

LossTerms compute_losses(const DhagModel& model, const Tensor& x, const PerturbationBatch& batch,
                         double lambda1, double lambda2, const Tensor* x_anom = nullptr,
                         bool adversarial = false);

struct TrainConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    std::size_t k = 50;
    std::size_t num_perturbators = 3;
    std::size_t batch_size = 512;
    std::size_t epochs = 200;
    double lr_encoder = 5e-3;
    double lr_discriminator = 5e-3;
    double lr_perturbator = 1e-5;
    std::uint64_t seed = 1;
    PerturbMode perturb_mode = PerturbMode::latent;
    double gamma = 0.0;
    bool adversarial_perturbators = false;

    void validate() const;
};

// Three Adam groups with their own learning rates (encoder, discriminator,
// perturbators).
struct Optimizers {
    Adam encoder;
    Adam discriminator;
    Adam perturbators;
};

Optimizers make_optimizers(const DhagModel& model, const TrainConfig& config);

// One full training iteration on a mini-batch: generate, rank/label, compute
// the three losses (plus the labeled-anomaly term when given), one backward,
// three Adam updates. Throws NumericError with diagnostics on non-finite loss.
LossReport train_step(DhagModel& model, const Tensor& batch_x, const Tensor* labeled_anoms,
                      const TrainConfig& config, Optimizers& opt, Rng& rng);

struct FitResult {
    std::vector<LossReport> epoch_mean;
    std::vector<LossReport> steps;
};

// Epoch loop of shuffled mini-batches for a fixed epoch budget. The last short
// batch is kept; K is clipped to its size. labeled_anoms, when present, adds
// the semi-supervised CE term each step (sub-batched when larger than m).
FitResult fit(DhagModel& model, const Tensor& train_x, const Tensor* labeled_anoms,
              const TrainConfig& config, Rng& rng);

// Anomaly probability per row via the trained encoder/discriminator pair.
// Inference only: no graph is recorded, parameters are untouched.
std::vector<double> anomaly_score(const DhagModel& model, const Tensor& x);

// Label 1 iff score > delta (strict).
std::vector<int> classify(std::span<const double> scores, double delta);

// Diagnostics over held-out data: mean pairwise |cosine| among perturbator
// outputs and mean perturbation norm, averaged over batches of batch_size.
struct PerturbationStats {
    double mean_abs_pairwise_cosine = 0.0;
    double mean_norm = 0.0;
};

PerturbationStats perturbation_stats(const DhagModel& model, const Tensor& x,
                                     std::size_t batch_size, Rng& rng);

}  // namespace dhag
