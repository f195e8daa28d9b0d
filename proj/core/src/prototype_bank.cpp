#include "epnet/prototype_bank.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "epnet/error.hpp"

namespace epnet {

PrototypeBank::PrototypeBank(std::size_t slots, std::size_t dim)
    : vectors_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(slots), static_cast<Eigen::Index>(dim))),
      slot_types_(slots),
      history_(slots, false) {
  if (slots < 1) throw InvalidArgument("a prototype bank needs at least the None slot");
  if (dim < 1) throw InvalidArgument("prototype dimension must be positive");
  slot_types_[kNoneSlot] = std::string(kNoneType);
  history_[kNoneSlot] = true;
}

std::optional<std::string> PrototypeBank::type_at(std::size_t slot) const {
  if (slot >= slot_types_.size()) throw InvalidArgument("unknown slot " + std::to_string(slot));
  return slot_types_[slot];
}

std::optional<std::size_t> PrototypeBank::slot_of(std::string_view type) const {
  for (std::size_t s = 0; s < slot_types_.size(); ++s)
    if (slot_types_[s] && *slot_types_[s] == type) return s;
  return std::nullopt;
}

std::vector<std::size_t> PrototypeBank::assigned_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < slot_types_.size(); ++s)
    if (slot_types_[s]) out.push_back(s);
  return out;
}

std::map<std::string, std::size_t> PrototypeBank::assignment() const {
  std::map<std::string, std::size_t> out;
  for (std::size_t s = 0; s < slot_types_.size(); ++s)
    if (slot_types_[s]) out.emplace(*slot_types_[s], s);
  return out;
}

void PrototypeBank::clear_assignment() {
  for (std::size_t s = 1; s < slot_types_.size(); ++s) slot_types_[s].reset();
}

void PrototypeBank::assign(std::size_t slot, std::string type) {
  if (slot == kNoneSlot || slot >= slot_types_.size())
    throw InvalidArgument("cannot assign a type to slot " + std::to_string(slot));
  if (type == kNoneType) throw InvalidArgument("the None type lives in slot 0 only");
  if (slot_types_[slot]) throw InvalidArgument("slot " + std::to_string(slot) + " already assigned");
  if (slot_of(type)) throw InvalidArgument("type '" + type + "' is already assigned");
  slot_types_[slot] = std::move(type);
}

void PrototypeBank::set_history(std::vector<bool> history) {
  if (history.size() != slot_types_.size()) throw InvalidArgument("history size mismatch");
  history[kNoneSlot] = true;
  history_ = std::move(history);
}

bool PrototypeBank::operator==(const PrototypeBank& other) const {
  return vectors_.rows() == other.vectors_.rows() && vectors_.cols() == other.vectors_.cols() &&
         vectors_ == other.vectors_ && slot_types_ == other.slot_types_ && history_ == other.history_;
}

PrototypeBank init_random(std::size_t dim, std::uint64_t seed, std::size_t slots, double sigma) {
  PrototypeBank bank(slots, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  auto& v = bank.vectors();
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index k = 0; k < v.cols(); ++k) v(i, k) = normal(rng);
  return bank;
}

// sum_ij |phi_i - phi_j|^2 / M^2 = (2/M) sum_i |phi_i - mean|^2
double mean_pairwise_sq_distance(const Eigen::MatrixXd& vectors) {
  const double m = static_cast<double>(vectors.rows());
  const Eigen::RowVectorXd mean = vectors.colwise().mean();
  return 2.0 / m * (vectors.rowwise() - mean).squaredNorm();
}

DistanceLossReport distance_loss(const PrototypeBank& bank, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be positive and finite");
  DistanceLossReport r;
  r.euc = mean_pairwise_sq_distance(bank.vectors());
  r.psi = std::abs(r.euc - tau);
  r.loss = std::log1p(r.psi);
  return r;
}

Eigen::MatrixXd distance_loss_gradient(const PrototypeBank& bank, double tau) {
  const auto report = distance_loss(bank, tau);
  const auto& v = bank.vectors();
  if (report.euc == tau) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
  const double m = static_cast<double>(v.rows());
  const double sign = report.euc > tau ? 1.0 : -1.0;
  const Eigen::RowVectorXd mean = v.colwise().mean();
  // d euc / d phi_i = 4 (phi_i - mean) / M
  return (sign / (report.psi + 1.0) * 4.0 / m) * (v.rowwise() - mean);
}

void assign_for_train(PrototypeBank& bank, const TypeSystem& types) {
  if (types.size() > bank.capacity())
    throw InvalidArgument(std::to_string(types.size()) + " entity types exceed the bank capacity of " +
                          std::to_string(bank.capacity()));
  bank.clear_assignment();
  auto history = bank.history();
  for (std::size_t i = 0; i < types.size(); ++i) {
    bank.assign(i + 1, types.names()[i]);
    history[i + 1] = true;
  }
  bank.set_history(std::move(history));
}

void assign_for_adapt(PrototypeBank& bank, const TypeSystem& target) {
  const auto previous = bank.assignment();
  std::vector<bool> taken(bank.slots(), false);
  taken[kNoneSlot] = true;
  std::vector<std::pair<std::size_t, std::string>> plan;
  std::vector<std::string> fresh;
  for (const auto& name : target.names()) {
    auto it = previous.find(name);
    if (it != previous.end()) {
      plan.emplace_back(it->second, name);
      taken[it->second] = true;
    } else {
      fresh.push_back(name);
    }
  }
  std::vector<std::size_t> free_slots;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t s = 1; s < bank.slots(); ++s)
      if (!taken[s] && bank.ever_assigned(s) == (pass == 0)) free_slots.push_back(s);
  if (fresh.size() > free_slots.size())
    throw InvalidArgument(std::to_string(target.size()) + " target types exceed the " +
                          std::to_string(bank.capacity()) + " available prototype slots");
  for (std::size_t i = 0; i < fresh.size(); ++i) plan.emplace_back(free_slots[i], fresh[i]);

  bank.clear_assignment();
  for (auto& [slot, name] : plan) bank.assign(slot, std::move(name));
}

PrototypeBank average_prototypes(const TypeSystem& types,
                                 const std::map<std::string, std::vector<Eigen::VectorXd>>& reps,
                                 const std::vector<Eigen::VectorXd>& none_reps, std::size_t slots) {
  if (none_reps.empty()) throw InvalidArgument("no None-span representations to average");
  const auto dim = static_cast<std::size_t>(none_reps.front().size());
  PrototypeBank bank(slots, dim);
  if (types.size() > bank.capacity()) throw InvalidArgument("too many types for the bank");

  auto mean_of = [dim](const std::vector<Eigen::VectorXd>& vs, const std::string& what) {
    if (vs.empty()) throw InvalidArgument("no example vectors for type '" + what + "'");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& v : vs) {
      if (static_cast<std::size_t>(v.size()) != dim)
        throw InvalidArgument("example vector dimension mismatch for type '" + what + "'");
      acc += v;
    }
    return Eigen::VectorXd(acc / static_cast<double>(vs.size()));
  };

  bank.vectors().row(kNoneSlot) = mean_of(none_reps, std::string(kNoneType)).transpose();
  for (std::size_t i = 0; i < types.size(); ++i) {
    const auto& name = types.names()[i];
    auto it = reps.find(name);
    if (it == reps.end()) throw InvalidArgument("no example vectors for type '" + name + "'");
    bank.vectors().row(static_cast<Eigen::Index>(i + 1)) = mean_of(it->second, name).transpose();
    bank.assign(i + 1, name);
  }
  return bank;
}

Eigen::MatrixXd distance_matrix(const PrototypeBank& bank, std::span<const std::size_t> slots) {
  if (slots.empty()) throw InvalidArgument("distance matrix needs at least one slot");
  for (auto s : slots)
    if (s >= bank.slots()) throw InvalidArgument("unknown slot " + std::to_string(s));
  const auto n = static_cast<Eigen::Index>(slots.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (bank.vectors().row(static_cast<Eigen::Index>(slots[i])) -
                        bank.vectors().row(static_cast<Eigen::Index>(slots[j])))
                           .squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

void write_distance_csv(const PrototypeBank& bank, std::span<const std::size_t> slots,
                        std::ostream& out) {
  const auto d = distance_matrix(bank, slots);
  out << "slot";
  for (auto s : slots) {
    out << ',' << s;
    if (auto t = bank.type_at(s)) out << ':' << *t;
  }
  out << '\n';
  auto old_precision = out.precision(10);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out << slots[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d.cols(); ++j) out << ',' << d(i, j);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace epnet
