#include "rainvsl/units.hpp"

namespace rainvsl {

static_assert(kmh_to_ms(36.0) == 10.0);
static_assert(ms_to_kmh(10.0) == 36.0);
static_assert(s_to_h(3600.0) == 1.0);

}  // namespace rainvsl
