#include "dhag/model.hpp"

namespace dhag {

PerturbMode perturb_mode_from_string(const std::string& s) {
    if (s == "latent") return PerturbMode::latent;
    if (s == "feature") return PerturbMode::feature;
    throw ConfigError("perturb_mode must be 'latent' or 'feature', got '" + s + "'");
}

std::string to_string(PerturbMode mode) {
    return mode == PerturbMode::latent ? "latent" : "feature";
}

PerturbatorKind perturbator_kind_from_string(const std::string& s) {
    if (s == "conv1d") return PerturbatorKind::conv1d;
    if (s == "mlp") return PerturbatorKind::mlp;
    throw ConfigError("perturbator kind must be 'conv1d' or 'mlp', got '" + s + "'");
}

std::string to_string(PerturbatorKind kind) {
    return kind == PerturbatorKind::conv1d ? "conv1d" : "mlp";
}

Tensor Perturbator::forward(const Tensor& x_with_noise) const {
    if (kind == PerturbatorKind::mlp) return mlp.forward(x_with_noise);
    const std::size_t m = x_with_noise.rows();
    const std::size_t channels = x_with_noise.cols();
    // Rows become length-1 signals with one channel per feature.
    Tensor h = reshape(x_with_noise, {m, channels, 1});
    for (const auto& conv : convs) {
        h = relu(conv1d_forward(conv, h));
    }
    h = reshape(h, {m, h.dim(1) * h.dim(2)});
    return linear_forward(conv_out, h);
}

std::vector<Tensor> Perturbator::params() const {
    if (kind == PerturbatorKind::mlp) return mlp.params();
    std::vector<Tensor> out;
    for (const auto& conv : convs) {
        out.push_back(conv.kernels);
        out.push_back(conv.bias);
    }
    out.push_back(conv_out.weight);
    out.push_back(conv_out.bias);
    return out;
}

std::size_t DhagModel::perturb_dim() const {
    return config.perturb_mode == PerturbMode::latent ? config.latent_dim : config.input_dim;
}

std::vector<Tensor> DhagModel::perturbator_params() const {
    std::vector<Tensor> out;
    for (const auto& p : perturbators) {
        auto ps = p.params();
        out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
}

std::vector<Tensor> DhagModel::all_params() const {
    std::vector<Tensor> out = encoder_params();
    auto d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    auto p = perturbator_params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
}

namespace {

void push_mlp_names(const Mlp& mlp, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        out.emplace_back(prefix + "." + std::to_string(i) + ".weight", mlp.layers[i].weight);
        out.emplace_back(prefix + "." + std::to_string(i) + ".bias", mlp.layers[i].bias);
    }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> DhagModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    push_mlp_names(encoder, "encoder", out);
    push_mlp_names(discriminator, "discriminator", out);
    for (std::size_t ell = 0; ell < perturbators.size(); ++ell) {
        const std::string prefix = "perturbator." + std::to_string(ell);
        const Perturbator& p = perturbators[ell];
        if (p.kind == PerturbatorKind::mlp) {
            push_mlp_names(p.mlp, prefix, out);
        } else {
            for (std::size_t c = 0; c < p.convs.size(); ++c) {
                out.emplace_back(prefix + ".conv" + std::to_string(c) + ".kernels",
                                 p.convs[c].kernels);
                out.emplace_back(prefix + ".conv" + std::to_string(c) + ".bias", p.convs[c].bias);
            }
            out.emplace_back(prefix + ".out.weight", p.conv_out.weight);
            out.emplace_back(prefix + ".out.bias", p.conv_out.bias);
        }
    }
    return out;
}

namespace {

Perturbator build_perturbator(const ModelConfig& config, Rng& rng) {
    const std::size_t in_dim = config.input_dim + 1;  // noise channel appended
    const std::size_t out_dim =
        config.perturb_mode == PerturbMode::latent ? config.latent_dim : config.input_dim;
    Perturbator p;
    p.kind = config.perturbator_kind;
    if (p.kind == PerturbatorKind::mlp) {
        std::vector<std::size_t> dims;
        dims.push_back(in_dim);
        for (std::size_t h : config.perturbator_hidden) dims.push_back(h);
        dims.push_back(out_dim);
        p.mlp = make_mlp(dims, Activation::relu, Activation::none, rng);
        return p;
    }
    std::size_t channels = in_dim;
    for (std::size_t h : config.perturbator_hidden) {
        p.convs.push_back(make_conv1d(channels, h, 1, InitScheme::kaiming_uniform, rng));
        channels = h;
    }
    p.conv_out = make_linear(channels, out_dim, InitScheme::xavier_uniform, rng);
    return p;
}

}  // namespace

DhagModel build_model(const ModelConfig& config, Rng& rng) {
    if (config.input_dim == 0) throw ConfigError("build_model: input_dim must be set");
    if (config.latent_dim == 0) throw ConfigError("build_model: latent_dim must be positive");
    if (config.num_perturbators == 0) throw ConfigError("build_model: need at least one perturbator");

    DhagModel model;
    model.config = config;

    std::vector<std::size_t> enc_dims;
    enc_dims.push_back(config.input_dim);
    for (std::size_t h : config.encoder_hidden) enc_dims.push_back(h);
    enc_dims.push_back(config.latent_dim);
    model.encoder = make_mlp(enc_dims, Activation::relu, Activation::none, rng);

    std::vector<std::size_t> disc_dims;
    disc_dims.push_back(config.latent_dim);
    for (std::size_t h : config.discriminator_hidden) disc_dims.push_back(h);
    disc_dims.push_back(1);
    model.discriminator = make_mlp(disc_dims, Activation::relu, Activation::sigmoid, rng);

    model.perturbators.reserve(config.num_perturbators);
    for (std::size_t ell = 0; ell < config.num_perturbators; ++ell) {
        model.perturbators.push_back(build_perturbator(config, rng));
    }
    return model;
}

}  // namespace dhag
