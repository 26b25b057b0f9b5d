#include "icnas/search_space.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace icnas {

std::string to_string(const Genotype& g) {
    std::string s = "[";
    for (std::size_t i = 0; i < g.choices.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(g.choices[i]);
    }
    return s + "]";
}

Genotype parse_genotype(const std::string& text) {
    std::string s = text;
    s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '[' || c == ']' || c == ' '; }), s.end());
    Genotype g;
    if (s.empty()) return g;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(item, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse genotype '" + text + "'");
        }
        if (pos != item.size()) throw std::invalid_argument("cannot parse genotype '" + text + "'");
        g.choices.push_back(v);
    }
    return g;
}

void to_json(nlohmann::json& j, const Genotype& g) { j = g.choices; }
void from_json(const nlohmann::json& j, Genotype& g) { g.choices = j.get<std::vector<int>>(); }

int OpCatalog::index_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument("op '" + name + "' not in catalog");
    return static_cast<int>(it - names.begin());
}

OpCatalog OpCatalog::nb201_full() { return {{"zero", "skip", "conv1x1", "conv3x3", "avgpool3x3"}}; }
OpCatalog OpCatalog::nb201_no_zero() { return {{"skip", "conv1x1", "conv3x3", "avgpool3x3"}}; }
OpCatalog OpCatalog::nb201_only_conv() { return {{"conv1x1", "conv3x3"}}; }
OpCatalog OpCatalog::sequential_conv() { return {{"conv3x3_e1", "conv3x3_e2", "conv1x1"}}; }

const std::vector<std::string>& known_ops() {
    static const std::vector<std::string> ops{"zero",       "skip",       "conv1x1", "conv3x3",
                                              "avgpool3x3", "conv3x3_e1", "conv3x3_e2"};
    return ops;
}

std::vector<LayerSpec> op_layers(const std::string& name, int c, bool conv_bias, bool bn_affine) {
    using L = LayerSpec;
    if (name == "zero") return {L::zero(c, c)};
    if (name == "skip") return {L::identity()};
    if (name == "conv1x1") return {L::relu(), L::conv(c, c, 1, 1, conv_bias), L::batchnorm(c, bn_affine)};
    if (name == "conv3x3") return {L::relu(), L::conv(c, c, 3, 1, conv_bias), L::batchnorm(c, bn_affine)};
    if (name == "avgpool3x3") return {L::avgpool(3, 1, 1)};
    // Expansion blocks: pointwise expand to e*C, then 3x3 back to C.
    auto expansion = [&](int e) {
        return std::vector<LayerSpec>{L::relu(),
                                      L::conv(c, e * c, 1, 1, conv_bias),
                                      L::batchnorm(e * c, bn_affine),
                                      L::relu(),
                                      L::conv(e * c, c, 3, 1, conv_bias),
                                      L::batchnorm(c, bn_affine)};
    };
    if (name == "conv3x3_e1") return expansion(1);
    if (name == "conv3x3_e2") return expansion(2);
    throw std::invalid_argument("unknown op '" + name + "'");
}

int SearchSpaceSpec::total_cells() const {
    int n = 0;
    for (const auto& s : stages) n += s.cells;
    return n;
}

int SearchSpaceSpec::num_choice_sites() const {
    return kind == SpaceKind::cell_dag ? static_cast<int>(edges.size()) : total_cells();
}

void SearchSpaceSpec::validate() const {
    if (catalog.names.empty()) throw std::invalid_argument("search space '" + id + "': empty catalog");
    std::set<std::string> unique(catalog.names.begin(), catalog.names.end());
    if (unique.size() != catalog.names.size()) {
        throw std::invalid_argument("search space '" + id + "': duplicate op names in catalog");
    }
    for (const auto& n : catalog.names) {
        if (std::find(known_ops().begin(), known_ops().end(), n) == known_ops().end()) {
            throw std::invalid_argument("search space '" + id + "': unknown op '" + n + "'");
        }
    }
    if (input_shape.size() != 3) throw std::invalid_argument("search space '" + id + "': input_shape must be C,H,W");
    (void)shape_numel(input_shape);
    if (num_classes < 2) throw std::invalid_argument("search space '" + id + "': need at least 2 classes");
    if (stages.empty()) throw std::invalid_argument("search space '" + id + "': no stages");
    for (const auto& s : stages) {
        if (s.cells < 1 || s.channels < 1) throw std::invalid_argument("search space '" + id + "': bad stage");
    }
    if (kind == SpaceKind::cell_dag) {
        if (edges.empty()) throw std::invalid_argument("search space '" + id + "': cell has no edges");
        for (auto [src, dst] : edges) {
            if (src < 0 || dst <= src) {
                throw std::invalid_argument("search space '" + id + "': edge (" + std::to_string(src) + "->" +
                                            std::to_string(dst) + ") is not forward");
            }
        }
        if (!topology_shared) {
            throw std::invalid_argument("search space '" + id + "': only topology-shared cells are supported");
        }
    }
}

SearchSpaceSpec SearchSpaceSpec::nb201(const OpCatalog& catalog, std::string id) {
    SearchSpaceSpec s;
    s.id = std::move(id);
    s.kind = SpaceKind::cell_dag;
    s.catalog = catalog;
    s.input_shape = {3, 8, 8};
    s.num_classes = 4;
    s.stages = {{1, 8}, {1, 16}, {1, 32}};
    s.residual = false;
    return s;
}

SearchSpaceSpec SearchSpaceSpec::nb201_paper_scale(const OpCatalog& catalog, std::string id) {
    SearchSpaceSpec s = nb201(catalog, std::move(id));
    s.input_shape = {3, 32, 32};
    s.num_classes = 10;
    s.stages = {{2, 16}, {2, 32}, {2, 64}};
    return s;
}

SearchSpaceSpec SearchSpaceSpec::toy_sequential() { return SearchSpaceSpec{}; }

SearchSpaceSpec SearchSpaceSpec::preset(const std::string& name) {
    if (name == "toy_sequential") return toy_sequential();
    if (name == "nb201_full") return nb201(OpCatalog::nb201_full(), name);
    if (name == "nb201_no_zero") return nb201(OpCatalog::nb201_no_zero(), name);
    if (name == "nb201_only_conv") return nb201(OpCatalog::nb201_only_conv(), name);
    if (name == "nb201_full_paper") return nb201_paper_scale(OpCatalog::nb201_full(), name);
    if (name == "nb201_no_zero_paper") return nb201_paper_scale(OpCatalog::nb201_no_zero(), name);
    if (name == "nb201_only_conv_paper") return nb201_paper_scale(OpCatalog::nb201_only_conv(), name);
    throw std::invalid_argument("unknown search space preset '" + name + "'");
}

void to_json(nlohmann::json& j, const SearchSpaceSpec& s) {
    j = nlohmann::json::object();
    j["id"] = s.id;
    j["kind"] = s.kind == SpaceKind::cell_dag ? "cell_dag" : "sequential";
    j["catalog"] = s.catalog.names;
    j["input_shape"] = s.input_shape;
    j["num_classes"] = s.num_classes;
    auto stages = nlohmann::json::array();
    for (const auto& st : s.stages) stages.push_back({{"cells", st.cells}, {"channels", st.channels}});
    j["stages"] = stages;
    auto edges = nlohmann::json::array();
    for (auto [a, b] : s.edges) edges.push_back({a, b});
    j["edges"] = edges;
    j["topology_shared"] = s.topology_shared;
    j["residual"] = s.residual;
    j["conv_bias"] = s.conv_bias;
    j["bn_affine"] = s.bn_affine;
}

void from_json(const nlohmann::json& j, SearchSpaceSpec& s) {
    // A preset name fills defaults; explicit keys override it.
    if (j.contains("preset")) {
        s = SearchSpaceSpec::preset(j.at("preset").get<std::string>());
    } else if (j.contains("kind") && j.at("kind") == "cell_dag") {
        s = SearchSpaceSpec::nb201(OpCatalog::nb201_full(), "nb201_full");
    } else {
        s = SearchSpaceSpec{};
    }
    if (j.contains("id")) s.id = j.at("id").get<std::string>();
    if (j.contains("kind")) {
        const auto k = j.at("kind").get<std::string>();
        if (k == "cell_dag") {
            s.kind = SpaceKind::cell_dag;
        } else if (k == "sequential") {
            s.kind = SpaceKind::sequential;
        } else {
            throw std::invalid_argument("unknown search space kind '" + k + "'");
        }
    }
    if (j.contains("catalog")) {
        const auto& c = j.at("catalog");
        if (c.is_string()) {
            const auto name = c.get<std::string>();
            if (name == "full") {
                s.catalog = OpCatalog::nb201_full();
            } else if (name == "no_zero") {
                s.catalog = OpCatalog::nb201_no_zero();
            } else if (name == "only_conv") {
                s.catalog = OpCatalog::nb201_only_conv();
            } else if (name == "sequential_conv") {
                s.catalog = OpCatalog::sequential_conv();
            } else {
                throw std::invalid_argument("unknown catalog preset '" + name + "'");
            }
        } else {
            s.catalog.names = c.get<std::vector<std::string>>();
        }
    }
    if (j.contains("input_shape")) s.input_shape = j.at("input_shape").get<std::vector<int>>();
    if (j.contains("num_classes")) s.num_classes = j.at("num_classes").get<int>();
    if (j.contains("stages")) {
        s.stages.clear();
        for (const auto& st : j.at("stages")) s.stages.push_back({st.at("cells").get<int>(), st.at("channels").get<int>()});
    }
    if (j.contains("edges")) {
        s.edges.clear();
        for (const auto& e : j.at("edges")) s.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    if (j.contains("topology_shared")) s.topology_shared = j.at("topology_shared").get<bool>();
    if (j.contains("residual")) s.residual = j.at("residual").get<bool>();
    if (j.contains("conv_bias")) s.conv_bias = j.at("conv_bias").get<bool>();
    if (j.contains("bn_affine")) s.bn_affine = j.at("bn_affine").get<bool>();
    s.validate();
}

std::uint64_t space_size(const SearchSpaceSpec& spec) {
    std::uint64_t n = 1;
    const auto c = static_cast<std::uint64_t>(spec.catalog.size());
    for (int i = 0; i < spec.num_choice_sites(); ++i) {
        if (n > UINT64_MAX / c) throw std::overflow_error("space_size overflows 64 bits");
        n *= c;
    }
    return n;
}

bool is_valid(const SearchSpaceSpec& spec, const Genotype& g) {
    if (static_cast<int>(g.size()) != spec.num_choice_sites()) return false;
    return std::all_of(g.choices.begin(), g.choices.end(),
                       [&](int v) { return v >= 0 && v < spec.catalog.size(); });
}

void require_valid(const SearchSpaceSpec& spec, const Genotype& g) {
    if (!is_valid(spec, g)) {
        throw std::invalid_argument("genotype " + to_string(g) + " is not valid for search space '" + spec.id +
                                    "' (" + std::to_string(spec.num_choice_sites()) + " sites, " +
                                    std::to_string(spec.catalog.size()) + " candidates)");
    }
}

std::vector<Genotype> enumerate(const SearchSpaceSpec& spec, std::uint64_t cap) {
    const std::uint64_t n = space_size(spec);
    if (n > cap) {
        throw std::length_error("search space '" + spec.id + "' has " + std::to_string(n) +
                                " architectures, above the enumeration cap of " + std::to_string(cap) +
                                "; use sample_uniform instead");
    }
    const int sites = spec.num_choice_sites();
    const int c = spec.catalog.size();
    std::vector<Genotype> out;
    out.reserve(static_cast<std::size_t>(n));
    Genotype g{std::vector<int>(static_cast<std::size_t>(sites), 0)};
    for (std::uint64_t i = 0; i < n; ++i) {
        out.push_back(g);
        for (int s = sites - 1; s >= 0; --s) {
            if (++g.choices[s] < c) break;
            g.choices[s] = 0;
        }
    }
    return out;
}

std::vector<Genotype> sample_uniform(const SearchSpaceSpec& spec, Rng& rng, std::size_t n, bool distinct) {
    const int sites = spec.num_choice_sites();
    const auto c = static_cast<std::uint64_t>(spec.catalog.size());
    auto draw = [&] {
        Genotype g{std::vector<int>(static_cast<std::size_t>(sites))};
        for (auto& v : g.choices) v = static_cast<int>(rng.uniform_int(c));
        return g;
    };
    std::vector<Genotype> out;
    out.reserve(n);
    if (!distinct) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(draw());
        return out;
    }
    const std::uint64_t size = space_size(spec);
    if (n > size) {
        throw std::invalid_argument("cannot draw " + std::to_string(n) + " distinct genotypes from a space of " +
                                    std::to_string(size));
    }
    if (size <= default_enumeration_cap && n * 2 > size) {
        // Dense request: partial Fisher-Yates over the enumeration.
        auto all = enumerate(spec);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.uniform_int(all.size() - i));
            std::swap(all[i], all[j]);
            out.push_back(all[i]);
        }
        return out;
    }
    std::set<Genotype> seen;
    while (out.size() < n) {
        Genotype g = draw();
        if (seen.insert(g).second) out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t layers_params(const std::vector<LayerSpec>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += param_count(l);
    return n;
}

std::size_t CandidateOp::params() const { return layers_params(layers); }

std::size_t NetworkPlan::stem_params() const { return layers_params(stem); }
std::size_t NetworkPlan::head_params() const { return layers_params(head); }

std::size_t NetworkPlan::reduction_params() const {
    std::size_t n = 0;
    for (const auto& u : units) {
        if (u.kind == UnitKind::reduction) n += layers_params(u.main) + layers_params(u.shortcut);
    }
    return n;
}

std::size_t NetworkPlan::candidate_params() const {
    std::size_t n = 0;
    for (const auto& u : units) {
        for (const auto& s : u.sites) {
            for (const auto& c : s.candidates) n += c.params();
        }
    }
    return n;
}

std::size_t NetworkPlan::total_params() const {
    return stem_params() + head_params() + reduction_params() + candidate_params();
}

namespace {

NetworkPlan build_plan(const SearchSpaceSpec& spec, const Genotype* fixed) {
    spec.validate();
    if (fixed) require_valid(spec, *fixed);
    using L = LayerSpec;
    NetworkPlan plan;
    plan.input_shape = spec.input_shape;
    plan.num_classes = spec.num_classes;
    plan.catalog_size = spec.catalog.size();
    plan.num_sites = spec.num_choice_sites();
    if (fixed) plan.genotype = *fixed;

    const int c0 = spec.stages.front().channels;
    plan.stem = {L::conv(spec.input_shape[0], c0, 3, 1, spec.conv_bias), L::batchnorm(c0, spec.bn_affine)};

    auto candidates_for = [&](int site, int channels) {
        std::vector<CandidateOp> out;
        for (int i = 0; i < spec.catalog.size(); ++i) {
            if (fixed && fixed->choices[site] != i) continue;
            const auto& name = spec.catalog.names[i];
            out.push_back({name, i, op_layers(name, channels, spec.conv_bias, spec.bn_affine)});
        }
        return out;
    };

    int global_site = 0;
    int channels = c0;
    for (std::size_t st = 0; st < spec.stages.size(); ++st) {
        const int width = spec.stages[st].channels;
        if (st > 0) {
            UnitPlan red;
            red.kind = UnitKind::reduction;
            red.in_channels = channels;
            red.out_channels = width;
            red.main = {L::relu(), L::conv(channels, width, 3, 2, spec.conv_bias), L::batchnorm(width, spec.bn_affine),
                        L::relu(), L::conv(width, width, 3, 1, spec.conv_bias), L::batchnorm(width, spec.bn_affine)};
            red.shortcut = {L::avgpool(2, 2, 0), L::conv(channels, width, 1, 1, false)};
            plan.units.push_back(std::move(red));
        } else if (width != channels) {
            throw std::logic_error("stem width mismatch");
        }
        channels = width;
        for (int cell = 0; cell < spec.stages[st].cells; ++cell) {
            UnitPlan u;
            u.in_channels = u.out_channels = channels;
            if (spec.kind == SpaceKind::cell_dag) {
                u.kind = UnitKind::cell;
                for (std::size_t e = 0; e < spec.edges.size(); ++e) {
                    SitePlan site;
                    site.site_index = static_cast<int>(e);
                    site.channels = channels;
                    site.src_node = spec.edges[e].first;
                    site.dst_node = spec.edges[e].second;
                    site.candidates = candidates_for(static_cast<int>(e), channels);
                    u.sites.push_back(std::move(site));
                }
            } else {
                u.kind = UnitKind::block;
                u.residual = spec.residual;
                SitePlan site;
                site.site_index = global_site;
                site.channels = channels;
                site.candidates = candidates_for(global_site, channels);
                u.sites.push_back(std::move(site));
                ++global_site;
            }
            plan.units.push_back(std::move(u));
        }
    }
    plan.head = {L::batchnorm(channels, spec.bn_affine), L::relu(), L::global_avgpool(),
                 L::dense(channels, spec.num_classes, true)};
    return plan;
}

}  // namespace

NetworkPlan supernet_plan(const SearchSpaceSpec& spec) { return build_plan(spec, nullptr); }

NetworkPlan instantiate(const SearchSpaceSpec& spec, const Genotype& genotype) { return build_plan(spec, &genotype); }

}  // namespace icnas
