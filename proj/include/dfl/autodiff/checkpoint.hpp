#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "dfl/autodiff/optim.hpp"
#include "dfl/autodiff/parameters.hpp"

// Binary checkpoint container; the byte layout is documented in
// docs/checkpoint_format.md.
namespace dfl::ad {

enum class EntryRole : std::uint8_t { parameter = 0, buffer = 1, first_moment = 2, second_moment = 3 };
enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename Real>
constexpr DType dtype_of() {
  return sizeof(Real) == 4 ? DType::f32 : DType::f64;
}

struct CheckpointEntry {
  std::string name;
  EntryRole role = EntryRole::parameter;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr char kMagic[8] = {'D', 'F', 'L', 'C', 'K', 'P', 'T', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  std::vector<std::uint8_t> to_bytes() const;
  static Checkpoint from_bytes(std::span<const std::uint8_t> bytes);
  /// Writes through a temporary file and renames, so readers never see a torn file.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const CheckpointEntry* find(const std::string& name, EntryRole role) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
void put_store(Checkpoint& ckpt, const ParameterStore<Real>& store);
/// Copies every entry of the store from the checkpoint; throws on a missing
/// name or a shape mismatch.
template <typename Real>
void get_store(const Checkpoint& ckpt, const ParameterStore<Real>& store);

template <typename Real>
void put_optimizer(Checkpoint& ckpt, const OptimizerState<Real>& state);
template <typename Real>
void get_optimizer(const Checkpoint& ckpt, OptimizerState<Real>& state);

}  // namespace dfl::ad
