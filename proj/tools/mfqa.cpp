#include "mfqa/cli.hpp"

int main(int argc, char** argv) { return mfqa::cli::cli_main(argc, argv); }
