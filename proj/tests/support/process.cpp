#include "process.hpp"

#include <sys/wait.h>

#include <cstdlib>

#include "phantom.hpp"

namespace testsupport {

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

ProcessResult run_command(const std::string& command, const std::filesystem::path& scratch,
                          const std::string& env_assignments) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const std::string line =
      "env -u PANCSYNTH_OUT -u PANCSYNTH_CONFIG -u PANCSYNTH_SEED -u PANCSYNTH_JOBS "
      "-u PANCSYNTH_HOST -u PANCSYNTH_PORT -u PANCSYNTH_DATA_DIR -u PANCSYNTH_UI_DIR " +
      env_assignments + " " + command + " >" + shell_quote(out.string()) + " 2>" +
      shell_quote(err.string());
  const int status = std::system(line.c_str());
  ProcessResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(out);
  r.err = read_text(err);
  return r;
}

}  // namespace testsupport
