#include "hwrisk/network.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "hwrisk/errors.hpp"

namespace hwrisk::nn {

namespace {

constexpr char kMagic[8] = {'H', 'W', 'R', 'I', 'S', 'K', 'N', 'N'};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "obs=" << obs_size << " dense1=" << dense1 << " dense2=" << dense2 << " lstm=" << lstm
     << " dense3=" << dense3 << " attention=" << attention << " head_log_std=" << head_log_std;
  return os.str();
}

ActorCritic::Trunk ActorCritic::make_trunk(ParameterSet& params, const std::string& prefix) {
  Trunk t;
  t.d1 = Dense::create(params, prefix + ".dense1", spec_.obs_size, spec_.dense1, Activation::kRelu);
  t.d2 = Dense::create(params, prefix + ".dense2", spec_.dense1, spec_.dense2, Activation::kRelu);
  t.lstm = LstmCell::create(params, prefix + ".lstm", spec_.dense2, spec_.lstm);
  if (spec_.attention) {
    t.attention = SelfAttention::create(params, prefix + ".attention", spec_.lstm, spec_.lstm);
  }
  t.d3 = Dense::create(params, prefix + ".dense3", spec_.lstm, spec_.dense3, Activation::kRelu);
  return t;
}

ActorCritic::ActorCritic(NetworkSpec spec, std::uint64_t seed) : spec_(spec) {
  actor_trunk_ = make_trunk(actor_, "actor");
  logits_head_ = Dense::create(actor_, "actor.logits", spec_.dense3, kBranchCount, Activation::kLinear);
  means_head_ = Dense::create(actor_, "actor.means", spec_.dense3, kContinuousDims, Activation::kLinear);
  if (spec_.head_log_std) {
    log_std_head_ = Dense::create(actor_, "actor.log_std", spec_.dense3, kContinuousDims,
                                  Activation::kLinear);
  } else {
    log_std_param_ = actor_.add("actor.log_std", 1, kContinuousDims);
  }
  critic_trunk_ = make_trunk(critic_, "critic");
  value_head_ = Dense::create(critic_, "critic.value", spec_.dense3, 1, Activation::kLinear);

  std::mt19937_64 rng(seed);
  for (auto [params, trunk] : {std::pair{&actor_, &actor_trunk_}, std::pair{&critic_, &critic_trunk_}}) {
    init_dense(*params, trunk->d1, rng, 1.0);
    init_dense(*params, trunk->d2, rng, 1.0);
    init_lstm(*params, trunk->lstm, rng, 1.0);
    if (spec_.attention) init_attention(*params, trunk->attention, rng);
    init_dense(*params, trunk->d3, rng, 1.0);
  }
  init_dense(actor_, logits_head_, rng, 0.01);
  init_dense(actor_, means_head_, rng, 0.01);
  if (spec_.head_log_std) {
    init_dense(actor_, log_std_head_, rng, 0.01);
    actor_[log_std_head_.bias].value.fill(spec_.init_log_std);
  } else {
    actor_[log_std_param_].value.fill(spec_.init_log_std);
  }
  init_dense(critic_, value_head_, rng, 1.0);
}

Var ActorCritic::run_trunk(Graph& g, ParameterSet& params, const Trunk& trunk,
                           const Tensor2D& windows) {
  const std::size_t obs = spec_.obs_size;
  if (windows.rows() == 0 || windows.cols() == 0 || windows.cols() % obs != 0) {
    throw ShapeMismatch("window width must be a positive multiple of " + std::to_string(obs));
  }
  const std::size_t steps = windows.cols() / obs;
  const std::size_t batch = windows.rows();
  Var h = g.constant(Tensor2D(batch, spec_.lstm));
  Var c = g.constant(Tensor2D(batch, spec_.lstm));
  std::vector<Var> hidden;
  hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor2D x(batch, obs);
    x.mat() = windows.mat().middleCols(Eigen::Index(t * obs), Eigen::Index(obs));
    Var z = trunk.d2(g, params, trunk.d1(g, params, g.constant(std::move(x))));
    std::tie(h, c) = trunk.lstm(g, params, z, h, c);
    hidden.push_back(h);
  }
  Var context = spec_.attention ? trunk.attention.last_query(g, params, hidden) : hidden.back();
  return trunk.d3(g, params, context);
}

PolicyOutputs ActorCritic::forward(Graph& g, const Tensor2D& windows) {
  PolicyOutputs out;
  Var a = run_trunk(g, actor_, actor_trunk_, windows);
  out.logits = logits_head_(g, actor_, a);
  out.means = means_head_(g, actor_, a);
  out.log_stds = spec_.head_log_std ? log_std_head_(g, actor_, a)
                                    : broadcast_rows(g.param(actor_, log_std_param_), windows.rows());
  Var v = run_trunk(g, critic_, critic_trunk_, windows);
  out.value = value_head_(g, critic_, v);
  return out;
}

PolicyValues ActorCritic::evaluate(std::span<const double> window) {
  Tensor2D row(1, window.size(), std::vector<double>(window.begin(), window.end()));
  Graph g;
  const PolicyOutputs o = forward(g, row);
  PolicyValues pv;
  for (std::size_t i = 0; i < kBranchCount; ++i) pv.logits[i] = o.logits.value()[i];
  for (std::size_t i = 0; i < kContinuousDims; ++i) {
    pv.means[i] = o.means.value()[i];
    pv.log_stds[i] = o.log_stds.value()[i];
  }
  pv.value = o.value.value()[0];
  return pv;
}

std::uint64_t ActorCritic::spec_hash() const {
  return fnv1a(spec_.describe() + "|" + actor_.layout() + "|" + critic_.layout());
}

void ActorCritic::zero_all() {
  for (Parameter& p : actor_) p.value.fill(0.0);
  for (Parameter& p : critic_) p.value.fill(0.0);
}

void ActorCritic::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(out, spec_hash());
  write_le<std::uint64_t>(out, actor_.scalar_count() + critic_.scalar_count());
  for (const ParameterSet* ps : {&actor_, &critic_}) {
    for (double v : ps->flat_values()) write_le<double>(out, v);
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

void ActorCritic::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("bad magic in " + path.string());
  }
  if (read_le<std::uint64_t>(in) != spec_hash()) {
    throw CheckpointError("network spec hash mismatch in " + path.string());
  }
  const auto count = read_le<std::uint64_t>(in);
  if (count != actor_.scalar_count() + critic_.scalar_count()) {
    throw CheckpointError("parameter count mismatch in " + path.string());
  }
  for (ParameterSet* ps : {&actor_, &critic_}) {
    std::vector<double> values(ps->scalar_count());
    for (double& v : values) v = read_le<double>(in);
    ps->assign_values(values);
  }
}

Tensor2D window_row(std::span<const Observation> history) {
  Tensor2D row(1, history.size() * kObservationSize);
  std::size_t k = 0;
  for (const Observation& o : history) {
    for (double v : o.flatten()) row[k++] = v;
  }
  return row;
}

PolicyValues forward_actor(ActorCritic& net, std::span<const Observation> history) {
  if (history.empty()) throw ShapeMismatch("observation history must not be empty");
  const Tensor2D row = window_row(history);
  return net.evaluate(row.values());
}

}  // namespace hwrisk::nn
