#pragma once

#include <cstdint>
#include <optional>

namespace synchro {

/// One point of the 1 Hz frequency series fed to the detector.
struct SecondSample {
  std::int64_t second = 0;      // soc
  std::optional<double> value;  // empty = gap marker
  bool exact = false;           // taken from the frac_sec == 0 frame

  bool is_gap() const { return !value.has_value(); }
  bool operator==(const SecondSample&) const = default;
};

}  // namespace synchro
