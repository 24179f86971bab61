#include "qmcast/service.hpp"

namespace qmcast {

bool ServiceSpec::is_strict_prefix_of(const ServiceSpec& other) const {
  if (chain.size() >= other.chain.size()) return false;
  for (std::size_t i = 0; i < chain.size(); ++i)
    if (chain[i] != other.chain[i]) return false;
  return true;
}

std::string ServiceSpec::label() const {
  std::string s = "O";
  for (const TransformId& t : chain) s = t + "(" + s + ")";
  return s;
}

}  // namespace qmcast
