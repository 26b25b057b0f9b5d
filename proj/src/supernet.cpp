#include "icnas/supernet.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace icnas {

void SupernetMode::validate() const {
    switch (variant) {
        case Variant::baseline: break;
        case Variant::bias:
        case Variant::shared_bias:
            if (depth < 1) throw std::invalid_argument("bias depth D must be at least 1");
            break;
        case Variant::split:
            if (depth != 1) throw std::invalid_argument("weight splitting supports only D = 1");
            if (split_epoch < 0) throw std::invalid_argument("split epoch must be non-negative");
            break;
    }
}

std::string to_string(const SupernetMode& m) {
    switch (m.variant) {
        case Variant::baseline: return "baseline";
        case Variant::bias: return "bias:" + std::to_string(m.depth);
        case Variant::shared_bias: return "shared_bias:" + std::to_string(m.depth);
        case Variant::split: return "split:" + std::to_string(m.split_epoch);
    }
    return "baseline";
}

SupernetMode parse_mode(const std::string& s) {
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    int arg = 1;
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            arg = std::stoi(s.substr(colon + 1), &used);
            if (used != s.size() - colon - 1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse super-network mode '" + s + "'");
        }
    }
    SupernetMode m;
    if (head == "baseline" && colon == std::string::npos) {
        m = SupernetMode::baseline();
    } else if (head == "bias") {
        m = SupernetMode::bias(arg);
    } else if (head == "shared_bias") {
        m = SupernetMode::shared_bias(arg);
    } else if (head == "split" && colon != std::string::npos) {
        m = SupernetMode::split(arg);
    } else {
        throw std::invalid_argument("unknown super-network mode '" + s +
                                    "' (expected baseline, bias:D, shared_bias:D or split:EPOCH)");
    }
    m.validate();
    return m;
}

ChoiceKey choice_context(int site_index, const Genotype& genotype, int depth, int sentinel) {
    ChoiceKey key(static_cast<std::size_t>(depth) + 1);
    for (int d = 0; d <= depth; ++d) {
        const int site = site_index - depth + d;
        key[d] = site >= 0 ? genotype.choices.at(site) : sentinel;
    }
    return key;
}

Genotype sample_path(const SearchSpaceSpec& spec, Rng& rng) {
    Genotype g{std::vector<int>(static_cast<std::size_t>(spec.num_choice_sites()))};
    const auto c = static_cast<std::uint64_t>(spec.catalog.size());
    for (auto& v : g.choices) v = static_cast<int>(rng.uniform_int(c));
    return g;
}

namespace {

void add_channel_bias(Tensor& x, const Tensor& bias) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            float* p = &x.at(b, ch, 0, 0);
            const float v = bias[ch];
            for (int i = 0; i < hw; ++i) p[i] += v;
        }
    }
}

void accumulate_channel_grad(Param<float>& bias, const Tensor& g) {
    const int n = g.dim(0), c = g.dim(1), hw = g.dim(2) * g.dim(3);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int b = 0; b < n; ++b) {
            const float* p = &g.at(b, ch, 0, 0);
            for (int i = 0; i < hw; ++i) s += p[i];
        }
        bias.grad[ch] += static_cast<float>(s);
    }
    bias.has_grad = true;
}

std::size_t count_params(const std::vector<const Param<float>*>& ps) {
    std::size_t n = 0;
    for (const auto* p : ps) n += p->value.size();
    return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// ChoiceBlock

ChoiceBlock::ChoiceBlock(const SitePlan& site, int catalog_size, const std::string& prefix, Rng& init)
    : site_(site.site_index), channels_(site.channels), catalog_size_(catalog_size), prefix_(prefix) {
    for (const auto& cand : site.candidates) {
        catalog_index_.push_back(cand.catalog_index);
        candidates_.emplace_back(cand.layers, prefix_ + ".c" + std::to_string(cand.catalog_index), init);
    }
}

int ChoiceBlock::candidate_position(int choice) const {
    for (std::size_t i = 0; i < catalog_index_.size(); ++i) {
        if (catalog_index_[i] == choice) return static_cast<int>(i);
    }
    throw std::invalid_argument("choice block '" + prefix_ + "' has no candidate " + std::to_string(choice));
}

Param<float>& ChoiceBlock::materialize_bias(const ChoiceKey& key) {
    auto it = bias_table_.find(key);
    if (it == bias_table_.end()) {
        std::string name = prefix_ + ".bias";
        for (int v : key) name += ":" + std::to_string(v);
        it = bias_table_.emplace(key, Param<float>(name, ParamKind::choice_bias, Tensor({channels_}))).first;
    }
    return it->second;
}

Param<float>& ChoiceBlock::materialize_shared_bias(int position, int choice) {
    const auto key = std::make_pair(position, choice);
    auto it = shared_bias_.find(key);
    if (it == shared_bias_.end()) {
        const std::string name = prefix_ + ".shared_bias:" + std::to_string(position) + ":" + std::to_string(choice);
        it = shared_bias_.emplace(key, Param<float>(name, ParamKind::choice_bias, Tensor({channels_}))).first;
    }
    return it->second;
}

Sequential<float>& ChoiceBlock::active_op() {
    return active_copy_ >= 0 ? copies_[active_pos_][active_copy_] : candidates_[active_pos_];
}

Tensor ChoiceBlock::forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm) {
    if (x.rank() != 4 || x.dim(1) != channels_) {
        throw std::invalid_argument("choice block '" + prefix_ + "': expected " + std::to_string(channels_) +
                                    " input channels, got " + shape_str(x.shape()));
    }
    const int choice = g.choices.at(site_);
    const int pos = candidate_position(choice);
    const bool train = mode == Mode::train;
    has_ctx_ = false;
    active_key_.reset();
    active_shared_.clear();

    Tensor input = x;
    if (sm.variant == Variant::bias) {
        const ChoiceKey key = choice_context(site_, g, sm.depth, catalog_size_);
        if (train) {
            add_channel_bias(input, materialize_bias(key).value);
            active_key_ = key;
        } else if (auto it = bias_table_.find(key); it != bias_table_.end()) {
            add_channel_bias(input, it->second.value);
        }
    } else if (sm.variant == Variant::shared_bias) {
        const ChoiceKey key = choice_context(site_, g, sm.depth, catalog_size_);
        for (int d = 0; d <= sm.depth; ++d) {
            if (key[d] == catalog_size_) continue;  // no predecessor at this position
            if (train) {
                add_channel_bias(input, materialize_shared_bias(d, key[d]).value);
                active_shared_.emplace_back(d, key[d]);
            } else if (auto it = shared_bias_.find({d, key[d]}); it != shared_bias_.end()) {
                add_channel_bias(input, it->second.value);
            }
        }
    }

    active_pos_ = pos;
    active_copy_ = -1;
    if (split_done_ && site_ > 0) active_copy_ = g.choices.at(site_ - 1);
    Tensor out = active_op().forward(input, mode);
    has_ctx_ = train;
    return out;
}

Tensor ChoiceBlock::backward(const Tensor& grad_out) {
    if (!has_ctx_) throw std::runtime_error("choice block '" + prefix_ + "': backward without train-mode forward");
    Tensor g = active_op().backward(grad_out);
    if (active_key_) accumulate_channel_grad(bias_table_.at(*active_key_), g);
    for (const auto& k : active_shared_) accumulate_channel_grad(shared_bias_.at(k), g);
    return g;
}

void ChoiceBlock::split() {
    if (split_done_) throw std::runtime_error("choice block '" + prefix_ + "' is already split");
    split_done_ = true;
    if (site_ == 0) return;  // no real predecessor: weights stay shared
    copies_.resize(candidates_.size());
    for (std::size_t c = 0; c < candidates_.size(); ++c) {
        const std::string base = prefix_ + ".c" + std::to_string(catalog_index_[c]);
        for (int prev = 0; prev < catalog_size_; ++prev) {
            Sequential<float> copy = candidates_[c];
            copy.clear_context();
            copy.rename(base + ".", base + ".p" + std::to_string(prev) + ".");
            copies_[c].push_back(std::move(copy));
        }
    }
    candidates_.clear();
    has_ctx_ = false;
}

std::vector<Param<float>*> ChoiceBlock::parameters() {
    std::vector<Param<float>*> out;
    for (auto& c : candidates_) {
        for (auto* p : c.parameters()) out.push_back(p);
    }
    for (auto& per : copies_) {
        for (auto& c : per) {
            for (auto* p : c.parameters()) out.push_back(p);
        }
    }
    for (auto& [k, p] : bias_table_) out.push_back(&p);
    for (auto& [k, p] : shared_bias_) out.push_back(&p);
    return out;
}

std::vector<const Param<float>*> ChoiceBlock::parameters() const {
    std::vector<const Param<float>*> out;
    for (auto* p : const_cast<ChoiceBlock*>(this)->parameters()) out.push_back(p);
    return out;
}

std::vector<Layer<float>*> ChoiceBlock::batchnorms() {
    std::vector<Layer<float>*> out;
    for (auto& c : candidates_) {
        for (auto* l : c.batchnorms()) out.push_back(l);
    }
    for (auto& per : copies_) {
        for (auto& c : per) {
            for (auto* l : c.batchnorms()) out.push_back(l);
        }
    }
    return out;
}

std::vector<const Layer<float>*> ChoiceBlock::batchnorms() const {
    std::vector<const Layer<float>*> out;
    for (auto* l : const_cast<ChoiceBlock*>(this)->batchnorms()) out.push_back(l);
    return out;
}

void ChoiceBlock::clear_context() {
    for (auto& c : candidates_) c.clear_context();
    for (auto& per : copies_) {
        for (auto& c : per) c.clear_context();
    }
    has_ctx_ = false;
}

std::size_t ChoiceBlock::candidate_param_count() const {
    std::size_t n = 0;
    for (const auto& c : candidates_) n += count_params(c.parameters());
    for (const auto& per : copies_) {
        for (const auto& c : per) n += count_params(c.parameters());
    }
    return n;
}

std::size_t ChoiceBlock::bias_param_count() const {
    return (bias_table_.size() + shared_bias_.size()) * static_cast<std::size_t>(channels_);
}

// ---------------------------------------------------------------------------
// Units

CellUnit::CellUnit(const UnitPlan& plan, int catalog_size, const std::string& prefix, Rng& init) {
    for (const auto& site : plan.sites) {
        edges_.emplace_back(site, catalog_size, prefix + ".e" + std::to_string(site.site_index), init);
        nodes_.emplace_back(site.src_node, site.dst_node);
        output_node_ = std::max(output_node_, site.dst_node);
    }
}

Tensor CellUnit::forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm) {
    std::vector<Tensor> node(static_cast<std::size_t>(output_node_) + 1, Tensor(x.shape()));
    node[0] = x;
    for (int j = 1; j <= output_node_; ++j) {
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            if (nodes_[e].second != j) continue;
            node[j] += edges_[e].forward(node[nodes_[e].first], g, mode, sm);
        }
    }
    return node[output_node_];
}

Tensor CellUnit::backward(const Tensor& grad_out) {
    std::vector<Tensor> grad(static_cast<std::size_t>(output_node_) + 1, Tensor(grad_out.shape()));
    grad[output_node_] = grad_out;
    for (int j = output_node_; j >= 1; --j) {
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            if (nodes_[e].second != j) continue;
            grad[nodes_[e].first] += edges_[e].backward(grad[j]);
        }
    }
    return grad[0];
}

BlockUnit::BlockUnit(const UnitPlan& plan, int catalog_size, const std::string& prefix, Rng& init)
    : block_(plan.sites.at(0), catalog_size, prefix + ".b", init), residual_(plan.residual) {}

Tensor BlockUnit::forward(const Tensor& x, const Genotype& g, Mode mode, const SupernetMode& sm) {
    Tensor y = block_.forward(x, g, mode, sm);
    if (residual_) y += x;
    return y;
}

Tensor BlockUnit::backward(const Tensor& grad_out) {
    Tensor g = block_.backward(grad_out);
    if (residual_) g += grad_out;
    return g;
}

ReductionUnit::ReductionUnit(const UnitPlan& plan, const std::string& prefix, Rng& init)
    : main_(plan.main, prefix + ".main", init), shortcut_(plan.shortcut, prefix + ".shortcut", init) {}

Tensor ReductionUnit::forward(const Tensor& x, Mode mode) {
    Tensor y = main_.forward(x, mode);
    y += shortcut_.forward(x, mode);
    return y;
}

Tensor ReductionUnit::backward(const Tensor& grad_out) {
    Tensor g = main_.backward(grad_out);
    g += shortcut_.backward(grad_out);
    return g;
}

// ---------------------------------------------------------------------------
// Supernet

Supernet::Supernet(const SearchSpaceSpec& spec, SupernetMode mode, std::uint64_t init_seed,
                   std::optional<Genotype> fixed)
    : spec_(spec), mode_(mode), fixed_(std::move(fixed)) {
    mode_.validate();
    plan_ = fixed_ ? instantiate(spec_, *fixed_) : supernet_plan(spec_);
    Rng init = Rng(init_seed).substream("init");
    stem_ = Sequential<float>(plan_.stem, "stem", init);
    for (std::size_t i = 0; i < plan_.units.size(); ++i) {
        const auto& u = plan_.units[i];
        const std::string prefix = "u" + std::to_string(i);
        switch (u.kind) {
            case UnitKind::cell: units_.emplace_back(CellUnit(u, plan_.catalog_size, prefix, init)); break;
            case UnitKind::block: units_.emplace_back(BlockUnit(u, plan_.catalog_size, prefix, init)); break;
            case UnitKind::reduction: units_.emplace_back(ReductionUnit(u, prefix, init)); break;
        }
    }
    head_ = Sequential<float>(plan_.head, "head", init);
}

void Supernet::check_genotype(const Genotype& g) const {
    if (static_cast<int>(g.size()) != plan_.num_sites) {
        throw std::invalid_argument("genotype " + to_string(g) + " has " + std::to_string(g.size()) +
                                    " choices, network has " + std::to_string(plan_.num_sites) + " sites");
    }
    for (int v : g.choices) {
        if (v < 0 || v >= plan_.catalog_size) {
            throw std::invalid_argument("genotype " + to_string(g) + " has a choice outside [0, " +
                                        std::to_string(plan_.catalog_size) + ")");
        }
    }
    if (fixed_ && g != *fixed_) {
        throw std::invalid_argument("stand-alone network " + to_string(*fixed_) + " cannot run path " + to_string(g));
    }
}

Tensor Supernet::forward(const Tensor& x, const Genotype& g, Mode mode) {
    check_genotype(g);
    const Shape& in = plan_.input_shape;
    if (x.rank() != 4 || x.dim(1) != in[0] || x.dim(2) != in[1] || x.dim(3) != in[2]) {
        throw std::invalid_argument("network input " + shape_str(x.shape()) + " does not match N x " + shape_str(in));
    }
    Tensor h = stem_.forward(x, mode);
    for (auto& unit : units_) {
        h = std::visit(
            [&](auto& u) -> Tensor {
                using U = std::decay_t<decltype(u)>;
                if constexpr (std::is_same_v<U, ReductionUnit>) {
                    return u.forward(h, mode);
                } else {
                    return u.forward(h, g, mode, mode_);
                }
            },
            unit);
    }
    return head_.forward(h, mode);
}

Tensor Supernet::backward(const Tensor& grad_logits) {
    Tensor g = head_.backward(grad_logits);
    for (auto it = units_.rbegin(); it != units_.rend(); ++it) {
        g = std::visit([&](auto& u) { return u.backward(g); }, *it);
    }
    return stem_.backward(g);
}

void Supernet::split_weights(int current_epoch) {
    if (mode_.variant != Variant::split) throw std::runtime_error("split_weights requires split mode");
    if (split_done_) throw std::runtime_error("super-network weights were already split");
    if (current_epoch != mode_.split_epoch) {
        throw std::runtime_error("split_weights at epoch " + std::to_string(current_epoch) + ", configured for epoch " +
                                 std::to_string(mode_.split_epoch));
    }
    for (auto* b : choice_blocks()) b->split();
    split_done_ = true;
}

Supernet Supernet::with_mode(SupernetMode mode) const {
    if (split_done_) throw std::runtime_error("with_mode: weights are already split");
    for (const auto* b : choice_blocks()) {
        if (b->bias_param_count() > 0) throw std::runtime_error("with_mode: bias tables already materialized");
    }
    mode.validate();
    Supernet copy = *this;
    copy.mode_ = mode;
    copy.clear_context();
    return copy;
}

std::vector<ChoiceBlock*> Supernet::choice_blocks() {
    std::vector<ChoiceBlock*> out;
    for (auto& unit : units_) {
        if (auto* c = std::get_if<CellUnit>(&unit)) {
            for (auto& e : c->edges()) out.push_back(&e);
        } else if (auto* b = std::get_if<BlockUnit>(&unit)) {
            out.push_back(&b->block());
        }
    }
    return out;
}

std::vector<const ChoiceBlock*> Supernet::choice_blocks() const {
    std::vector<const ChoiceBlock*> out;
    for (auto* b : const_cast<Supernet*>(this)->choice_blocks()) out.push_back(b);
    return out;
}

std::vector<Param<float>*> Supernet::parameters() {
    std::vector<Param<float>*> out = stem_.parameters();
    for (auto& unit : units_) {
        if (auto* r = std::get_if<ReductionUnit>(&unit)) {
            for (auto* p : r->main().parameters()) out.push_back(p);
            for (auto* p : r->shortcut().parameters()) out.push_back(p);
        } else if (auto* c = std::get_if<CellUnit>(&unit)) {
            for (auto& e : c->edges()) {
                for (auto* p : e.parameters()) out.push_back(p);
            }
        } else {
            for (auto* p : std::get<BlockUnit>(unit).block().parameters()) out.push_back(p);
        }
    }
    for (auto* p : head_.parameters()) out.push_back(p);
    return out;
}

std::vector<const Param<float>*> Supernet::parameters() const {
    std::vector<const Param<float>*> out;
    for (auto* p : const_cast<Supernet*>(this)->parameters()) out.push_back(p);
    return out;
}

std::vector<Layer<float>*> Supernet::batchnorms() {
    std::vector<Layer<float>*> out = stem_.batchnorms();
    for (auto& unit : units_) {
        if (auto* r = std::get_if<ReductionUnit>(&unit)) {
            for (auto* l : r->main().batchnorms()) out.push_back(l);
            for (auto* l : r->shortcut().batchnorms()) out.push_back(l);
        } else if (auto* c = std::get_if<CellUnit>(&unit)) {
            for (auto& e : c->edges()) {
                for (auto* l : e.batchnorms()) out.push_back(l);
            }
        } else {
            for (auto* l : std::get<BlockUnit>(unit).block().batchnorms()) out.push_back(l);
        }
    }
    for (auto* l : head_.batchnorms()) out.push_back(l);
    return out;
}

std::vector<const Layer<float>*> Supernet::batchnorms() const {
    std::vector<const Layer<float>*> out;
    for (auto* l : const_cast<Supernet*>(this)->batchnorms()) out.push_back(l);
    return out;
}

std::size_t Supernet::param_count() const { return count_params(parameters()); }

ParamOverhead Supernet::param_overhead() const {
    ParamOverhead r;
    r.total = param_count();
    r.baseline = plan_.total_params();
    r.extra = r.total - r.baseline;
    for (const auto* b : choice_blocks()) {
        r.bias_params += b->bias_param_count();
        r.bias_keys += b->bias_table().size() + b->shared_bias_table().size();
    }
    r.split_params = r.extra - r.bias_params;
    return r;
}

void Supernet::set_bn_momentum(double m) {
    for (auto* l : batchnorms()) l->set_bn_momentum(m);
}

void Supernet::clear_context() {
    stem_.clear_context();
    head_.clear_context();
    for (auto& unit : units_) {
        if (auto* r = std::get_if<ReductionUnit>(&unit)) {
            r->main().clear_context();
            r->shortcut().clear_context();
        } else if (auto* c = std::get_if<CellUnit>(&unit)) {
            for (auto& e : c->edges()) e.clear_context();
        } else {
            std::get<BlockUnit>(unit).block().clear_context();
        }
    }
}

Supernet make_standalone(const SearchSpaceSpec& spec, const Genotype& g, std::uint64_t init_seed) {
    return Supernet(spec, SupernetMode::baseline(), init_seed, g);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::json tensor_values(const Tensor& t) { return t.storage(); }

void read_values(const nlohmann::json& j, Tensor& t, const std::string& what) {
    auto v = j.get<std::vector<float>>();
    if (v.size() != t.size()) {
        throw std::runtime_error("checkpoint: '" + what + "' has " + std::to_string(v.size()) + " values, expected " +
                                 std::to_string(t.size()));
    }
    t.storage() = std::move(v);
}

const char* kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::weight: return "weight";
        case ParamKind::bias: return "bias";
        case ParamKind::batchnorm: return "batchnorm";
        case ParamKind::choice_bias: return "choice_bias";
    }
    return "weight";
}

}  // namespace

nlohmann::json checkpoint_json(const Supernet& net) {
    nlohmann::json j;
    j["format"] = "icnas.supernet";
    j["version"] = 1;
    j["mode"] = to_string(net.mode());
    j["spec"] = net.spec();
    j["fixed_genotype"] = net.fixed_genotype() ? nlohmann::json(*net.fixed_genotype()) : nlohmann::json(nullptr);
    j["split_done"] = net.split_done();
    auto params = nlohmann::json::array();
    for (const auto* p : net.parameters()) {
        if (p->kind == ParamKind::choice_bias) continue;
        params.push_back({{"name", p->name},
                          {"kind", kind_name(p->kind)},
                          {"shape", p->value.shape()},
                          {"value", tensor_values(p->value)},
                          {"velocity", tensor_values(p->velocity)}});
    }
    j["parameters"] = std::move(params);
    auto bns = nlohmann::json::array();
    for (const auto* l : net.batchnorms()) {
        bns.push_back({{"name", l->name()},
                       {"momentum", l->bn_momentum()},
                       {"running_mean", tensor_values(l->running_mean())},
                       {"running_var", tensor_values(l->running_var())}});
    }
    j["batchnorm"] = std::move(bns);
    auto biases = nlohmann::json::array();
    auto shared = nlohmann::json::array();
    for (const auto* b : net.choice_blocks()) {
        for (const auto& [key, p] : b->bias_table()) {
            biases.push_back({{"block", b->prefix()},
                              {"context", key},
                              {"value", tensor_values(p.value)},
                              {"velocity", tensor_values(p.velocity)}});
        }
        for (const auto& [key, p] : b->shared_bias_table()) {
            shared.push_back({{"block", b->prefix()},
                              {"position", key.first},
                              {"choice", key.second},
                              {"value", tensor_values(p.value)},
                              {"velocity", tensor_values(p.velocity)}});
        }
    }
    j["bias_tables"] = std::move(biases);
    j["shared_bias_tables"] = std::move(shared);
    return j;
}

Supernet supernet_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "icnas.supernet") throw std::runtime_error("not a super-network checkpoint");
    const auto spec = j.at("spec").get<SearchSpaceSpec>();
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    std::optional<Genotype> fixed;
    if (!j.at("fixed_genotype").is_null()) fixed = j.at("fixed_genotype").get<Genotype>();
    Supernet net(spec, mode, 0, fixed);
    if (j.at("split_done").get<bool>()) net.split_weights(mode.split_epoch);

    std::unordered_map<std::string, Param<float>*> by_name;
    for (auto* p : net.parameters()) by_name[p->name] = p;
    const auto& params = j.at("parameters");
    if (params.size() != by_name.size()) {
        throw std::runtime_error("checkpoint: parameter count mismatch (" + std::to_string(params.size()) + " vs " +
                                 std::to_string(by_name.size()) + ")");
    }
    for (const auto& pj : params) {
        const auto name = pj.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
        read_values(pj.at("value"), it->second->value, name);
        read_values(pj.at("velocity"), it->second->velocity, name);
    }
    std::unordered_map<std::string, Layer<float>*> bns;
    for (auto* l : net.batchnorms()) bns[l->name()] = l;
    for (const auto& bj : j.at("batchnorm")) {
        const auto name = bj.at("name").get<std::string>();
        auto it = bns.find(name);
        if (it == bns.end()) throw std::runtime_error("checkpoint: unknown batchnorm '" + name + "'");
        it->second->set_bn_momentum(bj.at("momentum").get<double>());
        read_values(bj.at("running_mean"), it->second->running_mean(), name);
        read_values(bj.at("running_var"), it->second->running_var(), name);
    }
    std::unordered_map<std::string, ChoiceBlock*> blocks;
    for (auto* b : net.choice_blocks()) blocks[b->prefix()] = b;
    auto block = [&](const nlohmann::json& e) {
        const auto name = e.at("block").get<std::string>();
        auto it = blocks.find(name);
        if (it == blocks.end()) throw std::runtime_error("checkpoint: unknown choice block '" + name + "'");
        return it->second;
    };
    for (const auto& e : j.at("bias_tables")) {
        auto& p = block(e)->materialize_bias(e.at("context").get<ChoiceKey>());
        read_values(e.at("value"), p.value, p.name);
        read_values(e.at("velocity"), p.velocity, p.name);
    }
    for (const auto& e : j.at("shared_bias_tables")) {
        auto& p = block(e)->materialize_shared_bias(e.at("position").get<int>(), e.at("choice").get<int>());
        read_values(e.at("value"), p.value, p.name);
        read_values(e.at("velocity"), p.velocity, p.name);
    }
    return net;
}

void save_checkpoint(const Supernet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << checkpoint_json(net).dump();
}

Supernet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    return supernet_from_json(nlohmann::json::parse(in));
}

std::uint64_t parameter_checksum(const Supernet& net, bool include_batchnorm) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : net.parameters()) {
        if (p->kind == ParamKind::batchnorm && !include_batchnorm) continue;
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        for (std::size_t i = 0; i < p->value.size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace icnas
