#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "icnas/layers.hpp"
#include "icnas/search_space.hpp"

namespace icnas {

enum class Variant { baseline, bias, shared_bias, split };

// Which inter-choice weights the super-network carries.
//   baseline          plain SPOS weights
//   bias:D            one bias vector per (D previous + current) choice combination
//   shared_bias:D     D+1 bias vectors, one per position in the context, summed
//   split:E           candidate weights copied per predecessor choice at epoch E
struct SupernetMode {
    Variant variant = Variant::baseline;
    int depth = 1;
    int split_epoch = 0;

    static SupernetMode baseline() { return {}; }
    static SupernetMode bias(int d) { return {Variant::bias, d, 0}; }
    static SupernetMode shared_bias(int d) { return {Variant::shared_bias, d, 0}; }
    static SupernetMode split(int epoch) { return {Variant::split, 1, epoch}; }

    void validate() const;
    bool operator==(const SupernetMode&) const = default;
};

std::string to_string(const SupernetMode& m);  // "baseline", "bias:2", "shared_bias:1", "split:20"
SupernetMode parse_mode(const std::string& s);

// Context of a choice: entry d is the choice at site (i - D + d); the last
// entry is the current choice. Missing predecessors read as `sentinel`.
using ChoiceKey = std::vector<int>;
ChoiceKey choice_context(int site_index, const Genotype& genotype, int depth, int sentinel);

// Uniform independent choice at every site.
Genotype sample_path(const SearchSpaceSpec& spec, Rng& rng);

// All candidates of one choice site plus the inter-choice weights.
class ChoiceBlock {
public:
    ChoiceBlock() = default;
    ChoiceBlock(const SitePlan& site, int catalog_size, const std::string& prefix, Rng& init);

    int site_index() const { return site_; }
    int channels() const { return channels_; }
    const std::string& prefix() const { return prefix_; }
    bool split_done() const { return split_done_; }

    Tensor forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm);
    Tensor backward(const Tensor& grad_out);

    // Deep-copies every candidate once per predecessor choice. No-op for site 0.
    void split();

    std::vector<Param<float>*> parameters();
    std::vector<const Param<float>*> parameters() const;
    std::vector<Layer<float>*> batchnorms();
    std::vector<const Layer<float>*> batchnorms() const;
    void clear_context();

    // Materialized bias vectors, keyed by full context (bias) or by
    // (position, choice) (shared_bias).
    const std::map<ChoiceKey, Param<float>>& bias_table() const { return bias_table_; }
    const std::map<std::pair<int, int>, Param<float>>& shared_bias_table() const { return shared_bias_; }
    std::map<ChoiceKey, Param<float>>& bias_table() { return bias_table_; }
    std::map<std::pair<int, int>, Param<float>>& shared_bias_table() { return shared_bias_; }
    Param<float>& materialize_bias(const ChoiceKey& key);
    Param<float>& materialize_shared_bias(int position, int choice);

    // Parameters owned by candidate ops (all copies after a split).
    std::size_t candidate_param_count() const;
    std::size_t bias_param_count() const;

private:
    int candidate_position(int choice) const;
    Sequential<float>& active_op();

    int site_ = 0;
    int channels_ = 0;
    int catalog_size_ = 0;
    std::string prefix_;
    std::vector<int> catalog_index_;
    std::vector<Sequential<float>> candidates_;
    std::vector<std::vector<Sequential<float>>> copies_;  // [candidate][predecessor choice]
    std::map<ChoiceKey, Param<float>> bias_table_;
    std::map<std::pair<int, int>, Param<float>> shared_bias_;
    bool split_done_ = false;

    // Context of the last train-mode forward, stored as indices so copies stay valid.
    bool has_ctx_ = false;
    int active_pos_ = -1;
    int active_copy_ = -1;
    std::optional<ChoiceKey> active_key_;
    std::vector<std::pair<int, int>> active_shared_;
};

class CellUnit {
public:
    CellUnit() = default;
    CellUnit(const UnitPlan& plan, int catalog_size, const std::string& prefix, Rng& init);
    Tensor forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm);
    Tensor backward(const Tensor& grad_out);
    std::vector<ChoiceBlock>& edges() { return edges_; }
    const std::vector<ChoiceBlock>& edges() const { return edges_; }

private:
    std::vector<ChoiceBlock> edges_;
    std::vector<std::pair<int, int>> nodes_;  // (src, dst) per edge
    int output_node_ = 0;
};

class BlockUnit {
public:
    BlockUnit() = default;
    BlockUnit(const UnitPlan& plan, int catalog_size, const std::string& prefix, Rng& init);
    Tensor forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm);
    Tensor backward(const Tensor& grad_out);
    ChoiceBlock& block() { return block_; }
    const ChoiceBlock& block() const { return block_; }

private:
    ChoiceBlock block_;
    bool residual_ = false;
};

class ReductionUnit {
public:
    ReductionUnit() = default;
    ReductionUnit(const UnitPlan& plan, const std::string& prefix, Rng& init);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    Sequential<float>& main() { return main_; }
    Sequential<float>& shortcut() { return shortcut_; }
    const Sequential<float>& main() const { return main_; }
    const Sequential<float>& shortcut() const { return shortcut_; }

private:
    Sequential<float> main_;
    Sequential<float> shortcut_;
};

using Unit = std::variant<CellUnit, BlockUnit, ReductionUnit>;

struct ParamOverhead {
    std::size_t total = 0;
    std::size_t baseline = 0;  // same space without inter-choice weights
    std::size_t extra = 0;
    std::size_t bias_params = 0;
    std::size_t split_params = 0;
    std::size_t bias_keys = 0;  // materialized bias vectors
    double extra_fraction() const { return baseline ? static_cast<double>(extra) / baseline : 0.0; }
};

// Super-network over a search space. Built from a stand-alone genotype it
// becomes the plain network of that architecture (one candidate per site).
class Supernet {
public:
    Supernet(const SearchSpaceSpec& spec, SupernetMode mode, std::uint64_t init_seed,
             std::optional<Genotype> fixed = std::nullopt);

    const SearchSpaceSpec& spec() const { return spec_; }
    const NetworkPlan& plan() const { return plan_; }
    const SupernetMode& mode() const { return mode_; }
    const std::optional<Genotype>& fixed_genotype() const { return fixed_; }
    bool split_done() const { return split_done_; }

    Tensor forward(const Tensor& x, const Genotype& g, Mode mode);
    // Gradient w.r.t. the input batch of the last train-mode forward.
    Tensor backward(const Tensor& grad_logits);

    // Weight splitting. Requires split mode, current_epoch == split_epoch and no earlier split.
    void split_weights(int current_epoch);

    // Copy with another mode; allowed while no inter-choice weights exist yet.
    Supernet with_mode(SupernetMode mode) const;

    std::vector<Param<float>*> parameters();
    std::vector<const Param<float>*> parameters() const;
    std::vector<Layer<float>*> batchnorms();
    std::vector<const Layer<float>*> batchnorms() const;
    std::vector<ChoiceBlock*> choice_blocks();
    std::vector<const ChoiceBlock*> choice_blocks() const;
    std::vector<Unit>& units() { return units_; }

    std::size_t param_count() const;
    ParamOverhead param_overhead() const;
    void set_bn_momentum(double m);
    void clear_context();

private:
    void check_genotype(const Genotype& g) const;

    SearchSpaceSpec spec_;
    NetworkPlan plan_;
    SupernetMode mode_;
    std::optional<Genotype> fixed_;
    Sequential<float> stem_;
    std::vector<Unit> units_;
    Sequential<float> head_;
    bool split_done_ = false;
};

// Convenience for a stand-alone architecture (baseline weights, one path).
Supernet make_standalone(const SearchSpaceSpec& spec, const Genotype& g, std::uint64_t init_seed);

// Checkpoint container (JSON): mode, spec, parameters with momentum
// buffers, BN running statistics, bias tables keyed by context tuples and
// the split flag.
nlohmann::json checkpoint_json(const Supernet& net);
Supernet supernet_from_json(const nlohmann::json& j);
void save_checkpoint(const Supernet& net, const std::string& path);
Supernet load_checkpoint(const std::string& path);

// Order-sensitive FNV-1a over the bytes of every non-BN parameter value.
std::uint64_t parameter_checksum(const Supernet& net, bool include_batchnorm = false);

}  // namespace icnas
