#pragma once

#include <ostream>
#include <string>

namespace gsculpt {

// Exit codes: 0 ok, 1 pipeline error (JSON on `err`), 2 usage.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// File name for a view's mask inside a masks/ directory.
std::string MaskFileName(int view_id);

}  // namespace gsculpt
