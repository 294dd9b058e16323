#pragma once

#include <string_view>

#include "food4all/domain.hpp"

namespace food4all {

// Closed table language over a JSON array of objects. Stages are joined by
// '|' and applied left to right:
//   filter <field> <op> <number|"string">   op: < <= > >= == !=
//   sort <field> [asc|desc]
//   take <n>
//   sum <field>     -> [{"sum_<field>": total}]
//   mean <field>    -> [{"mean_<field>": mean}]   (empty table: [])
// Anything else throws Error(kRejected). Rows lacking a filtered field are
// dropped; rows lacking a sort field sort last; sorting is stable.
json table_eval(const json& table, std::string_view expression);

}  // namespace food4all
