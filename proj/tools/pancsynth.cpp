#include "pancsynth/cli.hpp"

int main(int argc, char** argv) { return pancsynth::cli::run(argc, argv); }
