#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "icnas/layers.hpp"
#include "icnas/rng.hpp"

namespace icnas {

// One architecture: the chosen candidate index at every choice site.
struct Genotype {
    std::vector<int> choices;

    std::size_t size() const { return choices.size(); }
    int operator[](std::size_t i) const { return choices[i]; }
    auto operator<=>(const Genotype&) const = default;
    bool operator==(const Genotype&) const = default;
};

std::string to_string(const Genotype& g);     // "[0,1,2]"
Genotype parse_genotype(const std::string& s); // accepts "[0,1,2]" or "0,1,2"

// Ordered candidate operations. Order defines genotype index semantics.
struct OpCatalog {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }
    int index_of(const std::string& name) const;
    bool operator==(const OpCatalog&) const = default;

    static OpCatalog nb201_full();       // zero, skip, conv1x1, conv3x3, avgpool3x3
    static OpCatalog nb201_no_zero();    // skip, conv1x1, conv3x3, avgpool3x3
    static OpCatalog nb201_only_conv();  // conv1x1, conv3x3
    static OpCatalog sequential_conv();  // conv3x3_e1, conv3x3_e2, conv1x1
};

// Known op names. Every candidate maps C channels to C channels at stride 1.
const std::vector<std::string>& known_ops();
std::vector<LayerSpec> op_layers(const std::string& name, int channels, bool conv_bias, bool bn_affine);

enum class SpaceKind { cell_dag, sequential };

struct StageSpec {
    int cells = 1;
    int channels = 8;
    bool operator==(const StageSpec&) const = default;
};

struct SearchSpaceSpec {
    std::string id = "toy_sequential";
    SpaceKind kind = SpaceKind::sequential;
    OpCatalog catalog = OpCatalog::sequential_conv();
    Shape input_shape{3, 8, 8};  // channels, height, width
    int num_classes = 4;
    // Channel widths per stage; fixed ResNet reduction blocks sit between stages.
    std::vector<StageSpec> stages{{3, 8}};
    // Cell DAG edges in choice order, as (source node, target node).
    std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}};
    bool topology_shared = true;
    bool residual = true;  // sequential blocks add their input back
    bool conv_bias = false;
    bool bn_affine = true;

    // 6 for the cell DAG, total number of cells for sequential spaces.
    int num_choice_sites() const;
    int total_cells() const;
    void validate() const;
    bool operator==(const SearchSpaceSpec&) const = default;

    // Cell-DAG space at desk scale: 3x8x8 input, 8/16/32 channels, one cell per stage.
    static SearchSpaceSpec nb201(const OpCatalog& catalog, std::string id);
    // The 32x32 input, 16/32/64 channel, two cells per stage layout.
    static SearchSpaceSpec nb201_paper_scale(const OpCatalog& catalog, std::string id);
    // 3-site sequential only-conv toy space with 27 architectures.
    static SearchSpaceSpec toy_sequential();
    static SearchSpaceSpec preset(const std::string& name);
};

void to_json(nlohmann::json& j, const SearchSpaceSpec& s);
void from_json(const nlohmann::json& j, SearchSpaceSpec& s);
void to_json(nlohmann::json& j, const Genotype& g);
void from_json(const nlohmann::json& j, Genotype& g);

std::uint64_t space_size(const SearchSpaceSpec& spec);
bool is_valid(const SearchSpaceSpec& spec, const Genotype& g);
void require_valid(const SearchSpaceSpec& spec, const Genotype& g);

constexpr std::uint64_t default_enumeration_cap = 1'000'000;
// Lexicographic order over choices.
std::vector<Genotype> enumerate(const SearchSpaceSpec& spec, std::uint64_t cap = default_enumeration_cap);
std::vector<Genotype> sample_uniform(const SearchSpaceSpec& spec, Rng& rng, std::size_t n, bool distinct);

// ---------------------------------------------------------------------------
// Network description

struct CandidateOp {
    std::string name;
    int catalog_index = 0;
    std::vector<LayerSpec> layers;
    std::size_t params() const;
    bool operator==(const CandidateOp&) const = default;
};

struct SitePlan {
    int site_index = 0;
    int channels = 0;
    int src_node = -1;  // cell DAG only
    int dst_node = -1;
    std::vector<CandidateOp> candidates;
    bool operator==(const SitePlan&) const = default;
};

enum class UnitKind { cell, block, reduction };

struct UnitPlan {
    UnitKind kind = UnitKind::block;
    int in_channels = 0;
    int out_channels = 0;
    bool residual = false;             // block
    std::vector<SitePlan> sites;       // cell: one per edge; block: exactly one
    std::vector<LayerSpec> main;       // reduction
    std::vector<LayerSpec> shortcut;   // reduction
    bool operator==(const UnitPlan&) const = default;
};

// Full layer graph: stem -> units -> head. A super-network plan lists the
// whole catalog at every site; a stand-alone plan lists one candidate.
struct NetworkPlan {
    Shape input_shape;
    int num_classes = 0;
    int catalog_size = 0;
    int num_sites = 0;
    std::vector<LayerSpec> stem;
    std::vector<UnitPlan> units;
    std::vector<LayerSpec> head;
    std::optional<Genotype> genotype;  // set for stand-alone plans
    bool operator==(const NetworkPlan&) const = default;

    std::size_t stem_params() const;
    std::size_t head_params() const;
    std::size_t reduction_params() const;
    std::size_t candidate_params() const;  // all candidates at all sites
    std::size_t total_params() const;
    // Genotype that selects candidate 0 everywhere (the only path of a stand-alone plan).
    Genotype default_path() const { return Genotype{std::vector<int>(static_cast<std::size_t>(num_sites), 0)}; }
};

std::size_t layers_params(const std::vector<LayerSpec>& layers);

NetworkPlan supernet_plan(const SearchSpaceSpec& spec);
NetworkPlan instantiate(const SearchSpaceSpec& spec, const Genotype& genotype);

}  // namespace icnas
