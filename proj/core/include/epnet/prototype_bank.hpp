#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epnet/corpus.hpp"

namespace epnet {

// Default bank size: the None slot plus 100 type slots.
inline constexpr std::size_t kDefaultSlots = 101;
inline constexpr std::size_t kNoneSlot = 0;

// Prototype matrix (one row per slot) plus the slot <-> type assignment.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::size_t slots, std::size_t dim);

  std::size_t slots() const { return static_cast<std::size_t>(vectors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  // Number of slots available to entity types (slot 0 is None).
  std::size_t capacity() const { return slots() - 1; }

  Eigen::MatrixXd& vectors() { return vectors_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }

  // Type held by `slot`: kNoneType for slot 0, nullopt when unassigned.
  std::optional<std::string> type_at(std::size_t slot) const;
  std::optional<std::size_t> slot_of(std::string_view type) const;
  // Ascending slot indices that currently hold a type (always includes 0).
  std::vector<std::size_t> assigned_slots() const;
  std::map<std::string, std::size_t> assignment() const;
  bool ever_assigned(std::size_t slot) const { return history_.at(slot); }
  const std::vector<bool>& history() const { return history_; }

  // Low-level mutation used by assignment and deserialisation.
  void clear_assignment();
  void assign(std::size_t slot, std::string type);
  void set_history(std::vector<bool> history);

  bool operator==(const PrototypeBank& other) const;

 private:
  Eigen::MatrixXd vectors_;
  std::vector<std::optional<std::string>> slot_types_;
  std::vector<bool> history_;
};

// i.i.d. N(0, sigma^2) entries; only the None slot assigned.
PrototypeBank init_random(std::size_t dim, std::uint64_t seed, std::size_t slots = kDefaultSlots,
                          double sigma = 0.1);

struct DistanceLossReport {
  double euc = 0.0;   // mean squared distance over all ordered slot pairs
  double psi = 0.0;   // |euc - tau|
  double loss = 0.0;  // log(psi + 1)
};

// Uses every slot, assigned or not, and the (slots)^2 denominator including
// the zero self-pairs.
double mean_pairwise_sq_distance(const Eigen::MatrixXd& vectors);
DistanceLossReport distance_loss(const PrototypeBank& bank, double tau);
// dL/dphi; the zero matrix when euc == tau exactly.
Eigen::MatrixXd distance_loss_gradient(const PrototypeBank& bank, double tau);

// Type i of `types` (1-based) takes slot i; records the Train history.
void assign_for_train(PrototypeBank& bank, const TypeSystem& types);

// Reassigns the bank for a target domain. Types that held a slot before the
// call keep it; other target types take ever-assigned free slots first, then
// never-assigned ones, each in ascending order.
void assign_for_adapt(PrototypeBank& bank, const TypeSystem& target);

// Prototypes as means of example vectors. Slot i (1-based) holds types.names()[i-1];
// slot 0 is the mean of `none_reps`; remaining slots are zero and unassigned.
PrototypeBank average_prototypes(const TypeSystem& types,
                                 const std::map<std::string, std::vector<Eigen::VectorXd>>& reps,
                                 const std::vector<Eigen::VectorXd>& none_reps,
                                 std::size_t slots = kDefaultSlots);

// Squared Euclidean distances among the listed slots.
Eigen::MatrixXd distance_matrix(const PrototypeBank& bank, std::span<const std::size_t> slots);
// Header row of slot labels ("<slot>:<type>" or "<slot>" when unassigned).
void write_distance_csv(const PrototypeBank& bank, std::span<const std::size_t> slots,
                        std::ostream& out);

}  // namespace epnet
