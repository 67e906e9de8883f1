#pragma once
// Shared-encoder segmentation network with two decoders that differ only in
// their upsampling operator (transposed conv vs trilinear + 1x1 conv).

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tcseg/tensor.hpp"

namespace tcseg {

struct NetworkConfig {
    std::size_t in_channels = 1;
    std::size_t num_classes = 2;
    std::size_t base_width = 8;
    std::size_t num_stages = 3;
    std::size_t feature_dim = 16;

    void validate() const;
    // Required divisor of every spatial extent.
    std::size_t spatial_divisor() const { return std::size_t{1} << (num_stages - 1); }
    bool operator==(const NetworkConfig&) const = default;
};

struct BranchOutput {
    Tensor logits;    // [N, K, D, H, W]
    Tensor prob;      // softmax over K
    Tensor features;  // [N, feature_dim, D, H, W]
};

using DualOutput = std::pair<BranchOutput, BranchOutput>;

class DualDecoderNet {
public:
    DualDecoderNet(const NetworkConfig& cfg, std::uint64_t seed);

    // Tapes the graph when grad mode is on.
    DualOutput forward(const Tensor& x) const;

    const NetworkConfig& config() const { return cfg_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    // Deep copy of all parameter values; the copy does not require grad.
    DualDecoderNet frozen_copy() const;

private:
    struct Conv {
        std::size_t weight = 0;
        std::ptrdiff_t bias = -1;
    };
    struct Norm {
        std::size_t gamma = 0, beta = 0;
    };
    struct Block {
        Conv conv;
        Norm norm;
        std::size_t stride = 1;
    };
    struct UpStage {
        Conv up;
        Norm up_norm;
        Block refine;
    };
    struct Decoder {
        bool transposed = true;
        std::vector<UpStage> stages;  // deepest first
        Conv logits, features;
    };

    std::size_t add_param(const std::string& name, Tensor value);
    Conv make_conv(const std::string& name, std::size_t co, std::size_t ci, std::size_t k, bool bias,
                   std::mt19937_64& rng, bool transposed = false);
    Norm make_norm(const std::string& name, std::size_t c);
    Block make_block(const std::string& name, std::size_t co, std::size_t ci, std::size_t stride,
                     std::mt19937_64& rng);
    Tensor run_block(const Block& b, const Tensor& x) const;
    Tensor run_norm_relu(const Norm& n, const Tensor& x) const;
    BranchOutput run_decoder(const Decoder& d, const std::vector<Tensor>& skips) const;
    const Tensor& p(std::size_t i) const { return params_[i].value; }

    NetworkConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<std::vector<Block>> encoder_;
    Decoder dec1_, dec2_;
};

// Student plus an EMA teacher of identical structure.
class ModelPair {
public:
    ModelPair(const NetworkConfig& cfg, std::uint64_t seed);

    DualOutput forward(const Tensor& x) const { return student_.forward(x); }
    // Never taped.
    DualOutput teacher_forward(const Tensor& x) const;
    void update_teacher(double alpha);

    DualDecoderNet& student() { return student_; }
    const DualDecoderNet& student() const { return student_; }
    DualDecoderNet& teacher() { return teacher_; }
    const DualDecoderNet& teacher() const { return teacher_; }
    const NetworkConfig& config() const { return student_.config(); }

private:
    DualDecoderNet student_;
    DualDecoderNet teacher_;
};

// Flat archive of named little-endian float64 buffers: student weights and
// momentum, teacher weights, NetworkConfig header and iteration.
void save_checkpoint(const std::filesystem::path& path, const ModelPair& model, std::uint64_t iteration);
// Returns the stored iteration. Throws FormatError on malformed files or a
// configuration/parameter mismatch with `model`.
std::uint64_t load_checkpoint(const std::filesystem::path& path, ModelPair& model);
NetworkConfig read_checkpoint_config(const std::filesystem::path& path);

} // namespace tcseg
