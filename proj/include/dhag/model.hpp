#pragma once

#include <string>
#include <vector>

#include "dhag/nn.hpp"

namespace dhag {

enum class PerturbMode { latent, feature };
enum class PerturbatorKind { conv1d, mlp };

PerturbMode perturb_mode_from_string(const std::string& s);
std::string to_string(PerturbMode mode);
PerturbatorKind perturbator_kind_from_string(const std::string& s);
std::string to_string(PerturbatorKind kind);

// Input-conditioned stochastic generator: takes [m x (d+1)] (features plus one
// noise column) and emits one perturbation vector per row. The default stack
// treats the d+1 values as channels of a length-1 signal through width-1
// convolutions; the mlp variant is the algebraically equivalent dense form.
struct Perturbator {
    PerturbatorKind kind = PerturbatorKind::conv1d;
    std::vector<Conv1dLayer> convs;  // conv1d path
    LinearLayer conv_out;            // final linear map of the conv1d path
    Mlp mlp;                         // mlp path

    Tensor forward(const Tensor& x_with_noise) const;
    std::vector<Tensor> params() const;
};

struct ModelConfig {
    std::size_t input_dim = 0;
    std::size_t latent_dim = 32;
    std::vector<std::size_t> encoder_hidden = {64};
    std::vector<std::size_t> discriminator_hidden = {32};
    std::vector<std::size_t> perturbator_hidden = {32, 32};
    std::size_t num_perturbators = 3;
    PerturbatorKind perturbator_kind = PerturbatorKind::conv1d;
    PerturbMode perturb_mode = PerturbMode::latent;
};

struct DhagModel {
    Mlp encoder;        // d -> z
    Mlp discriminator;  // z -> (0,1)
    std::vector<Perturbator> perturbators;
    ModelConfig config;

    std::size_t input_dim() const { return config.input_dim; }
    std::size_t latent_dim() const { return config.latent_dim; }
    std::size_t num_perturbators() const { return perturbators.size(); }
    // Perturbation width: latent_dim in latent mode, input_dim in feature mode.
    std::size_t perturb_dim() const;

    Tensor encode(const Tensor& x) const { return encoder.forward(x); }
    Tensor discriminate(const Tensor& z) const { return discriminator.forward(z); }

    std::vector<Tensor> encoder_params() const { return encoder.params(); }
    std::vector<Tensor> discriminator_params() const { return discriminator.params(); }
    std::vector<Tensor> perturbator_params() const;
    std::vector<Tensor> all_params() const;

    // Named views for checkpointing; names are stable across save/load.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

DhagModel build_model(const ModelConfig& config, Rng& rng);

}  // namespace dhag
