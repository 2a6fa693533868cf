#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/prior.hpp"
#include "hdpcmdp/variational.hpp"

namespace hdpcmdp {

struct DatasetEntry {
  Trajectory traj;
  std::string env;
  std::uint64_t seed = 0;

  bool operator==(const DatasetEntry&) const = default;
};

/// One trajectory per line:
///   {"states": [[...], ...], "actions": [[...], ...], "true_z": [...], "env": name, "seed": n}
/// states has T+1 rows, actions T rows. Doubles are written in shortest
/// round-trip form.
void write_dataset(std::ostream& os, const std::vector<DatasetEntry>& data);
void save_dataset(const std::string& path, const std::vector<DatasetEntry>& data);
/// Throws Error naming the 1-based line of the first malformed record.
std::vector<DatasetEntry> read_dataset(std::istream& is);
std::vector<DatasetEntry> load_dataset(const std::string& path);

std::vector<Trajectory> trajectories_of(const std::vector<DatasetEntry>& data);

struct Checkpoint {
  HdpHyper hyper;
  PriorKind kind = PriorKind::hdp;
  VariationalParams vp;
};

/// JSON document: a header (format, K, network spec, hyper-parameters, prior
/// kind, removed contexts) followed by flat double arrays for nu_hat, mu_hat
/// (row-major), mu_hat_row and each context's flattened parameters.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

void save_chain(const std::string& path, const ContextChain& chain);
ContextChain load_chain(const std::string& path);

/// Columns t, b_0..b_{K-1}, decoded_z and true_z (when given).
void save_beliefs_csv(const std::string& path, const Mat& beliefs, const std::vector<int>& true_z = {});
/// Columns t, decoded_z and true_z (when given).
void save_zseq_csv(const std::string& path, const std::vector<int>& decoded, const std::vector<int>& true_z = {});

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace hdpcmdp
