#include "docie/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace docie::nn {

Param& ParamStore::create(const std::string& name, Matrix init,
                          ParamGroup group) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Param p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.group = group;
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return params_[it->second];
}

void ParamStore::zero_grad() {
  for (Param& p : params_) p.grad.setZero();
}

ad::Var bind(ad::Tape& tape, Param& p) {
  if (p.frozen) return tape.constant(p.value);
  return tape.parameter(p.value, &p.grad);
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in,
               Eigen::Index out, ParamGroup group, std::mt19937_64& rng)
    : weight_(&store.create(name + ".weight", xavier_uniform(in, out, rng),
                            group)),
      bias_(&store.create(name + ".bias", Matrix::Zero(1, out), group)) {}

ad::Var Linear::forward(ad::Tape& tape, const ad::Var& x) const {
  return ad::add_row(ad::matmul(x, bind(tape, *weight_)), bind(tape, *bias_));
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight_->value;
  y.rowwise() += bias_->value.row(0);
  return y;
}

FeedForward::FeedForward(ParamStore& store, const std::string& name,
                         Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                         ParamGroup group, std::mt19937_64& rng)
    : hidden_(store, name + ".hidden", in, hidden, group, rng),
      output_(store, name + ".output", hidden, out, group, rng) {}

ad::Var FeedForward::forward(ad::Tape& tape, const ad::Var& x) const {
  return output_.forward(tape, ad::relu(hidden_.forward(tape, x)));
}

Matrix FeedForward::apply(const Matrix& x) const {
  return output_.apply(hidden_.apply(x).cwiseMax(0.0));
}

double AdamW::step(ParamStore& store, double lr_multiplier) {
  double sq = 0.0;
  for (const Param& p : store.all())
    if (!p.frozen) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = (options_.max_grad_norm > 0.0 && norm > options_.max_grad_norm)
                          ? options_.max_grad_norm / norm
                          : 1.0;
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (Param& p : store.all()) {
    if (p.frozen) continue;
    auto [it, inserted] = moments_.try_emplace(
        p.name, Matrix::Zero(p.value.rows(), p.value.cols()),
        Matrix::Zero(p.value.rows(), p.value.cols()));
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    const Matrix g = p.grad * clip;
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    const double lr = lr_multiplier * (p.group == ParamGroup::kEncoder
                                           ? options_.encoder_lr
                                           : options_.task_lr);
    p.value *= (1.0 - lr * options_.weight_decay);
    p.value.array() -= lr * (m.array() / bc1) /
                       ((v.array() / bc2).sqrt() + options_.eps);
  }
  return norm;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: unexpected end of stream");
  return v;
}

template void write_pod<std::int64_t>(std::ostream&, const std::int64_t&);
template void write_pod<std::uint64_t>(std::ostream&, const std::uint64_t&);
template void write_pod<std::uint32_t>(std::ostream&, const std::uint32_t&);
template void write_pod<double>(std::ostream&, const double&);
template std::int64_t read_pod<std::int64_t>(std::istream&);
template std::uint64_t read_pod<std::uint64_t>(std::istream&);
template std::uint32_t read_pod<std::uint32_t>(std::istream&);
template double read_pod<double>(std::istream&);

void write_matrix(std::ostream& out, const Matrix& m) {
  write_pod<std::int64_t>(out, m.rows());
  write_pod<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix read_matrix(std::istream& in) {
  const auto rows = read_pod<std::int64_t>(in);
  const auto cols = read_pod<std::int64_t>(in);
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32))
    throw std::runtime_error("checkpoint: corrupt matrix header");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw std::runtime_error("checkpoint: truncated matrix");
  return m;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 32))
    throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void AdamW::save(std::ostream& out) const {
  write_pod<std::int64_t>(out, steps_);
  write_pod<std::uint64_t>(out, moments_.size());
  // Deterministic order for byte-stable checkpoints.
  std::vector<const std::string*> names;
  for (const auto& [name, _] : moments_) names.push_back(&name);
  std::sort(names.begin(), names.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  for (const std::string* name : names) {
    write_string(out, *name);
    write_matrix(out, moments_.at(*name).first);
    write_matrix(out, moments_.at(*name).second);
  }
}

void AdamW::load(std::istream& in) {
  steps_ = read_pod<std::int64_t>(in);
  const auto n = read_pod<std::uint64_t>(in);
  moments_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    Matrix m = read_matrix(in);
    Matrix v = read_matrix(in);
    moments_.emplace(std::move(name), std::make_pair(std::move(m), std::move(v)));
  }
}

}  // namespace docie::nn
