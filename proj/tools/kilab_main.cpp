#include "kilab/cli.hpp"

int main(int argc, char** argv) { return kilab::run_cli(argc, argv); }
