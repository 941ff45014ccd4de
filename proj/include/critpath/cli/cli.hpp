#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "critpath/data/dataset.hpp"
#include "critpath/nn/network.hpp"

namespace critpath::cli {

// kind[:key=value,...] where kind is gaussian, uniform, fgsm, pgd, ood or file.
//   gaussian:count=N,mean=0.5,std=1   uniform:count=N,lo=0,hi=1
//   fgsm:eps=0.3                       pgd:eps=0.3,step=0.01,iters=40
//   ood:name=NAME,path=FILE            file:path=SIDECAR.json
struct AnomalySpec {
  std::string kind;
  std::map<std::string, std::string> params;

  std::string param(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
};

AnomalySpec parse_anomaly_spec(const std::string& text);

// Builds the anomaly set for `spec`. Noise counts default to the size of
// `base`; attacks perturb every item of `base` against its label.
data::AnomalySet materialize(const AnomalySpec& spec, const nn::Network& net, const data::LabeledDataset& base,
                             std::uint64_t seed);

enum ExitCode : int { kOk = 0, kInternal = 1, kInvalidInput = 2 };

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace critpath::cli
