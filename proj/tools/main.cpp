#include "vistext/cli.hpp"

int main(int argc, char** argv) { return vistext::cli::cli_main(argc, argv); }
