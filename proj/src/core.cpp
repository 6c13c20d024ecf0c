#include "dhag/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dhag {

std::vector<Tensor> sample_noise(std::size_t m, std::size_t count, Rng& rng) {
    std::vector<Tensor> noise;
    noise.reserve(count);
    for (std::size_t ell = 0; ell < count; ++ell) {
        std::vector<double> col(m);
        for (double& v : col) v = rng.normal();
        noise.push_back(Tensor::from_data({m, 1}, std::move(col)));
    }
    return noise;
}

std::vector<Tensor> perturb_forward(const DhagModel& model, const Tensor& x,
                                    const std::vector<Tensor>& noise) {
    if (x.rank() != 2 || x.cols() != model.input_dim()) {
        throw DimensionError("perturb_forward: input width does not match model");
    }
    if (noise.size() != model.num_perturbators()) {
        throw DimensionError("perturb_forward: need one noise column per perturbator");
    }
    std::vector<Tensor> eps;
    eps.reserve(noise.size());
    for (std::size_t ell = 0; ell < noise.size(); ++ell) {
        Tensor with_noise = concat_channel(x, noise[ell]);
        eps.push_back(model.perturbators[ell].forward(with_noise));
    }
    return eps;
}

std::vector<Tensor> generate_perturbations(const DhagModel& model, const Tensor& x, Rng& rng) {
    return perturb_forward(model, x, sample_noise(x.rows(), model.num_perturbators(), rng));
}

std::vector<int> assign_pseudo_labels(std::span<const double> norms, std::size_t k) {
    const std::size_t m = norms.size();
    if (k > m) throw ConfigError("assign_pseudo_labels: K exceeds batch size");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
    std::vector<int> labels(m, 1);
    for (std::size_t rank = 0; rank < k; ++rank) labels[order[rank]] = 0;
    return labels;
}

namespace {

std::vector<double> detached_row_norms(const Tensor& eps) {
    const std::size_t m = eps.rows(), z = eps.cols();
    const double* p = eps.data().data();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < z; ++j) s += p[i * z + j] * p[i * z + j];
        out[i] = std::sqrt(s);
    }
    return out;
}

}  // namespace

PerturbationBatch label_perturbations(std::vector<Tensor> eps, std::size_t k) {
    PerturbationBatch batch;
    batch.eps = std::move(eps);
    for (const Tensor& e : batch.eps) {
        batch.norms.push_back(detached_row_norms(e));
        const std::size_t k_eff = std::min(k, batch.norms.back().size());
        batch.pseudo_labels.push_back(assign_pseudo_labels(batch.norms.back(), k_eff));
    }
    return batch;
}

PerturbationBatch make_batch_with_labels(std::vector<Tensor> eps,
                                         std::vector<std::vector<int>> labels) {
    if (eps.size() != labels.size()) {
        throw DimensionError("make_batch_with_labels: label group count mismatch");
    }
    PerturbationBatch batch;
    batch.eps = std::move(eps);
    batch.pseudo_labels = std::move(labels);
    for (const Tensor& e : batch.eps) batch.norms.push_back(detached_row_norms(e));
    return batch;
}

PerturbationBatch generate_and_label(const DhagModel& model, const Tensor& x, std::size_t k,
                                     Rng& rng) {
    return label_perturbations(generate_perturbations(model, x, rng), k);
}

Tensor loss_ce(const DhagModel& model, const Tensor& x, const PerturbationBatch& batch,
               bool adversarial) {
    const std::size_t m = x.rows();
    const std::size_t ell_count = batch.num_perturbators();
    if (ell_count == 0) throw DimensionError("loss_ce: empty perturbation batch");

    const std::vector<int> zeros(m, 0);
    Tensor z = model.encode(x);
    Tensor clean = bce_mean(model.discriminate(z), zeros);

    Tensor perturbed_sum;
    for (std::size_t ell = 0; ell < ell_count; ++ell) {
        Tensor e = batch.eps[ell];
        if (adversarial) e = grad_reverse(e);
        Tensor z_pert = model.config.perturb_mode == PerturbMode::latent
                            ? add(z, e)
                            : model.encode(add(x, e));
        Tensor term = bce_mean(model.discriminate(z_pert), batch.pseudo_labels[ell]);
        perturbed_sum = perturbed_sum.defined() ? add(perturbed_sum, term) : term;
    }
    return add(clean, scale(perturbed_sum, 1.0 / static_cast<double>(ell_count)));
}

Tensor loss_norm(const std::vector<Tensor>& eps) {
    Tensor acc;
    for (const Tensor& e : eps) {
        Tensor term = mean(row_l2_norm(e));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / static_cast<double>(eps.size()));
}

Tensor loss_div(const std::vector<Tensor>& eps) {
    const std::size_t ell_count = eps.size();
    if (ell_count < 2) {
        log_warn("loss_div: fewer than two perturbators, diversity loss is 0");
        return Tensor::scalar(0.0);
    }
    Tensor acc;
    for (std::size_t a = 0; a < ell_count; ++a) {
        for (std::size_t b = a + 1; b < ell_count; ++b) {
            Tensor term = mean(row_cosine(eps[a], eps[b]));
            acc = acc.defined() ? add(acc, term) : term;
        }
    }
    // Unordered pairs doubled onto the ordered-pair normalizer.
    return scale(acc, 2.0 / static_cast<double>(ell_count * (ell_count - 1)));
}

Tensor semi_sup_loss(const DhagModel& model, const Tensor& x_anom) {
    if (x_anom.rows() == 0) throw ConfigError("semi_sup_loss: empty anomaly set");
    const std::vector<int> ones(x_anom.rows(), 1);
    return bce_mean(model.discriminate(model.encode(x_anom)), ones);
}

LossReport LossTerms::report() const {
    LossReport r;
    r.ce = ce.value();
    r.norm = norm.value();
    r.div = div.value();
    r.aug = aug.defined() ? aug.value() : 0.0;
    r.total = total.value();
    return r;
}

LossTerms compute_losses(const DhagModel& model, const Tensor& x, const PerturbationBatch& batch,
                         double lambda1, double lambda2, const Tensor* x_anom, bool adversarial) {
    LossTerms terms;
    terms.ce = loss_ce(model, x, batch, adversarial);
    terms.norm = loss_norm(batch.eps);
    terms.div = loss_div(batch.eps);
    terms.total = add(terms.ce, add(scale(terms.norm, lambda1), scale(terms.div, lambda2)));
    if (x_anom != nullptr) {
        terms.aug = semi_sup_loss(model, *x_anom);
        terms.total = add(terms.total, terms.aug);
    }
    return terms;
}

void TrainConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda coefficients must be >= 0");
    if (num_perturbators == 0) throw ConfigError("L must be at least 1");
    if (batch_size == 0) throw ConfigError("batch size m must be positive");
    if (k > batch_size) throw ConfigError("K must satisfy 0 <= K <= m");
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must lie in [0, 1)");
    if (lr_encoder < 0.0 || lr_discriminator < 0.0 || lr_perturbator < 0.0) {
        throw ConfigError("learning rates must be >= 0");
    }
}

Optimizers make_optimizers(const DhagModel& model, const TrainConfig& config) {
    return Optimizers{Adam(model.encoder_params(), config.lr_encoder),
                      Adam(model.discriminator_params(), config.lr_discriminator),
                      Adam(model.perturbator_params(), config.lr_perturbator)};
}

namespace {

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
    const std::size_t d = x.cols();
    std::vector<double> out;
    out.reserve(idx.size() * d);
    const double* p = x.data().data();
    for (std::size_t i : idx) {
        out.insert(out.end(), p + i * d, p + (i + 1) * d);
    }
    return Tensor::from_data({idx.size(), d}, std::move(out));
}

}  // namespace

LossReport train_step(DhagModel& model, const Tensor& batch_x, const Tensor* labeled_anoms,
                      const TrainConfig& config, Optimizers& opt, Rng& rng) {
    const std::size_t m = batch_x.rows();
    const std::size_t k_eff = std::min(config.k, m);

    PerturbationBatch batch = generate_and_label(model, batch_x, k_eff, rng);
    LossTerms terms = compute_losses(model, batch_x, batch, config.lambda1, config.lambda2,
                                     labeled_anoms, config.adversarial_perturbators);

    LossReport report;
    try {
        report = terms.report();
    } catch (const NumericError&) {
        double max_norm = 0.0;
        for (const auto& norms : batch.norms)
            for (double v : norms) max_norm = std::max(max_norm, v);
        double pmin = 1.0, pmax = 0.0;
        {
            NoGradGuard guard;
            for (double p : model.discriminate(model.encode(batch_x)).data()) {
                pmin = std::min(pmin, p);
                pmax = std::max(pmax, p);
            }
        }
        throw NumericError("train_step: non-finite loss (max perturbation norm " +
                           std::to_string(max_norm) + ", clean probability range [" +
                           std::to_string(pmin) + ", " + std::to_string(pmax) + "])");
    }

    backward(terms.total);
    opt.encoder.step();
    opt.discriminator.step();
    opt.perturbators.step();
    return report;
}

FitResult fit(DhagModel& model, const Tensor& train_x, const Tensor* labeled_anoms,
              const TrainConfig& config, Rng& rng) {
    config.validate();
    if (config.gamma > 0.0 && (labeled_anoms == nullptr || labeled_anoms->rows() == 0)) {
        throw ConfigError("fit: gamma > 0 requires a labeled anomaly pool");
    }

    Optimizers opt = make_optimizers(model, config);
    const std::size_t n = train_x.rows();
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);

    FitResult result;
    result.epoch_mean.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(indices);
        LossReport epoch_acc;
        std::size_t steps_in_epoch = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, n - start);
            Tensor batch =
                gather_rows(train_x, std::span<const std::size_t>(indices).subspan(start, count));

            Tensor anom_batch;
            const Tensor* anom_ptr = nullptr;
            if (config.gamma > 0.0 && labeled_anoms != nullptr && labeled_anoms->rows() > 0) {
                if (labeled_anoms->rows() > config.batch_size) {
                    std::vector<std::size_t> pool(labeled_anoms->rows());
                    std::iota(pool.begin(), pool.end(), 0);
                    rng.shuffle(pool);
                    pool.resize(config.batch_size);
                    anom_batch = gather_rows(*labeled_anoms, pool);
                } else {
                    anom_batch = *labeled_anoms;
                }
                anom_ptr = &anom_batch;
            }

            LossReport step = train_step(model, batch, anom_ptr, config, opt, rng);
            result.steps.push_back(step);
            epoch_acc.ce += step.ce;
            epoch_acc.norm += step.norm;
            epoch_acc.div += step.div;
            epoch_acc.aug += step.aug;
            epoch_acc.total += step.total;
            ++steps_in_epoch;
        }
        const double denom = static_cast<double>(std::max<std::size_t>(steps_in_epoch, 1));
        result.epoch_mean.push_back(LossReport{epoch_acc.ce / denom, epoch_acc.norm / denom,
                                               epoch_acc.div / denom, epoch_acc.aug / denom,
                                               epoch_acc.total / denom});
    }
    return result;
}

std::vector<double> anomaly_score(const DhagModel& model, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != model.input_dim()) {
        throw DimensionError("anomaly_score: feature dimension mismatch (got " +
                             std::to_string(x.rank() == 2 ? x.cols() : 0) + ", model expects " +
                             std::to_string(model.input_dim()) + ")");
    }
    NoGradGuard guard;
    Tensor p = model.discriminate(model.encode(x));
    return std::vector<double>(p.data().begin(), p.data().end());
}

std::vector<int> classify(std::span<const double> scores, double delta) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > delta ? 1 : 0;
    return out;
}

PerturbationStats perturbation_stats(const DhagModel& model, const Tensor& x,
                                     std::size_t batch_size, Rng& rng) {
    NoGradGuard guard;
    const std::size_t n = x.rows();
    const std::size_t ell_count = model.num_perturbators();
    double cos_sum = 0.0, norm_sum = 0.0;
    std::size_t cos_count = 0, norm_count = 0;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        Tensor batch = gather_rows(x, std::span<const std::size_t>(idx).subspan(start, count));
        std::vector<Tensor> eps = generate_perturbations(model, batch, rng);
        for (const Tensor& e : eps) {
            for (double v : row_l2_norm(e).data()) {
                norm_sum += v;
                ++norm_count;
            }
        }
        for (std::size_t a = 0; a < ell_count; ++a) {
            for (std::size_t b = a + 1; b < ell_count; ++b) {
                for (double v : row_cosine(eps[a], eps[b]).data()) {
                    cos_sum += std::abs(v);
                    ++cos_count;
                }
            }
        }
    }
    PerturbationStats stats;
    stats.mean_norm = norm_count ? norm_sum / static_cast<double>(norm_count) : 0.0;
    stats.mean_abs_pairwise_cosine = cos_count ? cos_sum / static_cast<double>(cos_count) : 0.0;
    return stats;
}

}  // namespace dhag
