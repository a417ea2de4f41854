#include "cli/commands.hpp"

int main(int argc, char** argv) { return mlmcgrad::cli::main_entry(argc, argv); }
